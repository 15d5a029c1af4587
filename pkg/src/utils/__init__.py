# Logging, configuration and error types module
