from .frame import (FrameRow, FrameTable, SoftLabelMatrix, ClassWeights, ScoreMatrix, harden_labels,
                    class_weights_from_frequency, validate_table, label_columns, values_of, lag_column, lead_column,
                    is_lag_lead_column, concat_tables, KEY_COLUMNS, ROOM_COLUMN)
from .io import (read_frame_csv, write_frame_csv, read_prediction_csv, write_prediction_csv, align_predictions,
                 read_stream_csv, write_stream_csv)
