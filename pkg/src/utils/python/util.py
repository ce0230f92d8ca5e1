import dataclasses
import datetime
import hashlib
import json
import logging
import os
import sys
import tempfile
import typing
import warnings
from functools import wraps

try:
    import ConfigParser
except Exception as e:
    import configparser as ConfigParser

import src

logger = logging.getLogger(__name__)

proj_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../..'))
config_dir = os.path.join(proj_dir, 'config/')
preset_dir = os.path.join(config_dir, 'presets/')

# sections of a run configuration file and the key that marks
# the section holding file locations rather than dataclass fields
RUN_SECTIONS = ('model', 'train', 'loss', 'degradation', 'data')
DATA_KEYS = ('source_dir', 'target_dir')


class ConfigError(ValueError):
    """Raised when a configuration file or flag set cannot be used."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super(ConfigError, self).__init__('; '.join(self.problems))


def get_output_config(section):
    """Returns the config object to output.cfg."""
    cfg = ConfigParser.ConfigParser()
    cfg.read(config_dir + 'output.cfg')
    cfg_options = dict(cfg.items(section))
    return cfg_options


def read_config_file(path):
    """Read an INI style run configuration into a dict of dicts.

    Parameters
    ----------
    path : str
        path to the .cfg file

    Returns
    -------
    sections : dict
        section name -> {key: raw string value}
    """
    if not os.path.isfile(path):
        raise ConfigError('config file not found: {0}'.format(path))
    cfg = ConfigParser.ConfigParser()
    cfg.optionxform = str  # keep key case as written
    try:
        cfg.read(path)
    except ConfigParser.Error as e:
        raise ConfigError('could not parse {0}: {1}'.format(path, e))
    return {s: dict(cfg.items(s)) for s in cfg.sections()}


def preset_path(name):
    """Path to a named preset (desk, full)."""
    path = os.path.join(preset_dir, name + '.cfg')
    if not os.path.isfile(path):
        known = sorted(f[:-4] for f in os.listdir(preset_dir) if f.endswith('.cfg'))
        raise ConfigError('unknown preset "{0}" (known: {1})'.format(name, ', '.join(known)))
    return path


def _convert(raw, hint, key):
    """Convert a raw config value to the python type of a dataclass field."""
    if not isinstance(raw, str):
        # values from a stored snapshot are already typed
        return tuple(raw) if typing.get_origin(hint) is tuple else raw
    text = raw.strip()
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if typing.get_origin(hint) is tuple:
            return tuple(int(v) for v in text.replace(' ', '').split(',') if v)
        return text
    except ValueError:
        raise ConfigError('bad value for {0}: "{1}"'.format(key, raw))


def field_names(cls):
    """Config keys of a dataclass; fields filled from another section
    (metadata 'section') are not keys of this one."""
    return [f.name for f in dataclasses.fields(cls)
            if f.init and 'section' not in f.metadata]


def coerce_section(cls, values, section):
    """Turn raw key/values into constructor kwargs for the dataclass cls.

    Every key must be a field of cls. All offending keys are reported
    together.
    """
    hints = typing.get_type_hints(cls)
    known = set(field_names(cls))
    unknown = sorted(k for k in values if k not in known)
    if unknown:
        raise ConfigError(['unknown key {0}.{1}'.format(section, k) for k in unknown])
    kwargs = {}
    problems = []
    for key, raw in values.items():
        try:
            kwargs[key] = _convert(raw, hints[key], '{0}.{1}'.format(section, key))
        except ConfigError as e:
            problems.extend(e.problems)
    if problems:
        raise ConfigError(problems)
    return kwargs


def merge_run_config(schema, layers):
    """Merge raw run configuration layers, later layers winning.

    Parameters
    ----------
    schema : dict
        section name -> dataclass (or None for the data section)
    layers : list of dict
        each a section -> {key: value} mapping (preset, user file, flags)

    Returns
    -------
    merged : dict
        section -> {key: value}, validated against the schema
    """
    problems = []
    merged = {s: {} for s in schema}
    for layer in layers:
        for section, values in layer.items():
            if section not in schema:
                problems.append('unknown section [{0}]'.format(section))
                continue
            cls = schema[section]
            allowed = set(DATA_KEYS) if cls is None else set(field_names(cls))
            for key, value in values.items():
                if key not in allowed:
                    problems.append('unknown key {0}.{1}'.format(section, key))
                else:
                    merged[section][key] = value
    if problems:
        raise ConfigError(problems)
    return merged


def start_logging(log_file='', log_level='INFO', verbose=False):
    """Start logging information into the log directory.

    If os.devnull is specified as the log_file then the log file will
    not actually be written to a file.
    """
    if not log_file:
        # create log directory if it doesn't exist
        log_dir = os.path.abspath('log') + '/'
        if not os.path.isdir(log_dir):
            os.mkdir(log_dir)

        # path to new log file
        log_file = log_dir + 'log.run.' + str(datetime.datetime.now()).replace(':', '.') + '.txt'

    # logger options
    lvl = logging.DEBUG if log_level.upper() == 'DEBUG' else logging.INFO

    # ignore deprecation chatter from torch/matplotlib if not in debug
    if log_level.upper() != 'DEBUG':
        warnings.filterwarnings('ignore', category=DeprecationWarning)
        warnings.filterwarnings('ignore', category=UserWarning)

    # define logging format
    if verbose:
        myformat = '%(asctime)s - %(name)s - %(levelname)s \n>>>  %(message)s'
    else:
        myformat = '%(message)s'

    # create logger
    if not log_file == 'stdout':
        # normal logging to a regular file
        logging.basicConfig(level=lvl,
                            format=myformat,
                            filename=log_file,
                            filemode='w')
    else:
        # logging to stdout
        root = logging.getLogger()
        root.setLevel(lvl)
        stdout_stream = logging.StreamHandler(sys.stdout)
        stdout_stream.setLevel(lvl)
        formatter = logging.Formatter(myformat)
        stdout_stream.setFormatter(formatter)
        root.addHandler(stdout_stream)
        root.propagate = True


def log_error_decorator(f):
    """Writes exception to log file if occured in decorated function.

    The exception is re-raised so callers can decide whether a failure
    aborts the command or only the current file.
    """
    @wraps(f)
    def wrapper(*args, **kwds):
        try:
            result = f(*args, **kwds)
            return result
        except KeyboardInterrupt:
            logger.info('Ctrl-C stopped a process.')
            raise
        except Exception as e:
            logger.exception(e)
            raise
    return wrapper


def make_result_dir(save_dir):
    """Create the output directory of a command if needed."""
    if save_dir is not None and not os.path.exists(save_dir):
        os.makedirs(save_dir)


def list_pngs(directory):
    """Sorted list of PNG file names (not paths) in a directory."""
    if not os.path.isdir(directory):
        raise FileNotFoundError('directory not found: {0}'.format(directory))
    return sorted(f for f in os.listdir(directory) if f.lower().endswith('.png'))


def stable_seed(base_seed, name):
    """Seed derived from a base seed and a name, independent of
    PYTHONHASHSEED and of the order in which names are visited."""
    digest = hashlib.sha256('{0}:{1}'.format(base_seed, name).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') % (2 ** 31)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, write_func, mode='wb'):
    """Write a file through a temporary sibling and rename it into place.

    write_func receives the open handle of the temporary file.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp.')
    try:
        with os.fdopen(fd, mode) as handle:
            write_func(handle)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def _jsonable(opts):
    """Drop CLI bookkeeping (callables) so the options can be stored."""
    return {k: v for k, v in opts.items() if not callable(v)}


def write_run_manifest(out_dir, subcommand, opts, outputs,
                       inputs=None, config=None, seed=None):
    """Write the RunManifest of a command next to its outputs.

    Parameters
    ----------
    out_dir : str
        output directory of the command
    subcommand : str
        name of the cyclesr sub-command
    opts : dict
        resolved command line options
    outputs : list of str
        paths of every artifact the command wrote
    inputs : list of str
        input paths (directories or files)
    config : dict
        resolved configuration snapshot, if the command used one
    seed : int
        base seed of the run

    Returns
    -------
    manifest_path : str
    """
    manifest_name = get_output_config('manifest')['manifest']
    manifest_path = os.path.join(out_dir, manifest_name)
    checksums = {os.path.relpath(p, out_dir): sha256_file(p)
                 for p in sorted(outputs) if os.path.isfile(p)}
    manifest = {
        'subcommand': subcommand,
        'version': src.__version__,
        'options': _jsonable(opts),
        'config': config,
        'inputs': list(inputs or []),
        'outputs': sorted(checksums),
        'seed': seed,
        'checksums': checksums,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True, default=str)
    atomic_write(manifest_path, lambda h: h.write(text), mode='w')
    logger.info('Wrote run manifest to {0}'.format(manifest_path))
    return manifest_path


def read_run_manifest(path):
    with open(path, 'r') as handle:
        return json.load(handle)
