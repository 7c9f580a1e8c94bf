from .scenario import Scenario, ScenarioConfig, activity_name_list, room_name_list, generate_scenario
