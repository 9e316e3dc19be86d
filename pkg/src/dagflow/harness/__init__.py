"""Configuration, persistence, evaluation and the command line."""

from dagflow.harness.config import RunConfig, dump_config, parse_config, parse_config_text

__all__ = ["RunConfig", "dump_config", "parse_config", "parse_config_text"]
