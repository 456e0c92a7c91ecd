"""Reading plain-text key=value config files"""
import os

import yaml

from vesselfit.utils.error import ConfigError


def parse_value(text):
    """Type a raw config value the way YAML types a scalar ("0.1", "true", "[1, 2]")"""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("Invalid config value '{}': {}".format(text, e))


def parse_config(lines, source='<config>'):
    """Parse key=value lines into a dict; blank lines and '#' comments are ignored"""
    data = {}
    for lineno, raw_line in enumerate(lines, start=1):
        line = raw_line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError("{}:{}: expected key=value, got '{}'".format(source, lineno, line))
        key, value = line.split('=', 1)
        key = key.strip().replace('-', '_')
        if not key:
            raise ConfigError("{}:{}: empty key".format(source, lineno))
        if key in data:
            raise ConfigError("{}:{}: duplicate key '{}'".format(source, lineno, key))
        data[key] = parse_value(value.strip())
    return data


def read_config(path):
    """Read a key=value config file as a dict"""
    if not os.path.exists(path):
        raise ConfigError("Config file not found: {}".format(path))
    with open(path, 'r') as f:
        return parse_config(f.read().splitlines(), source=path)
