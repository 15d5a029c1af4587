# Network scenario and performance model module
