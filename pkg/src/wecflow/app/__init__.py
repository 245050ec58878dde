"""Configuration, problem assembly, command line and reporting."""
