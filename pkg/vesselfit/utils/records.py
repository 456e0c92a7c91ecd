"""In-memory run records (hyperparameters, per-stage metrics) of the current fit"""
from vesselfit.utils.logger import log

_data_blocks = []


def get_records(record_type=None):
    """Get the list of (record_type, data) blocks recorded so far

    Args:
        record_type(string, optional): Only return blocks of this type,
            e.g. `metrics` or `hyperparams`.
    """
    global _data_blocks
    if record_type is None:
        return list(_data_blocks)
    return [(rec_type, data) for (rec_type, data) in _data_blocks if rec_type == record_type]


def reset(*record_types):
    """Reset the tracked hyperparameters or metrics (for a fresh fit)

    Args:
        *record_types(strings, optional): By default, resets all type of records.
            To reset specific type of records, pass arguments `metrics`,
            `hyperparams`
    Example
        .. code-block::

            from vesselfit.utils.records import reset
            reset('metrics')
    """
    global _data_blocks

    if len(record_types) == 0:
        _data_blocks = []
    else:
        _data_blocks = [(rec_type, data) for (rec_type, data) in _data_blocks
                        if rec_type not in record_types]


def _parse_data(data, data_args):
    """Parse different types of arguments"""
    data = dict(data or {})
    for k in data_args:
        data[k] = data_args[k]
    return data if len(data) > 0 else None


def log_record(record_type, data=None, verbose=True, **data_args):
    """Create records with the given data & type"""
    global _data_blocks
    data = _parse_data(data, data_args)
    if data is None:
        if verbose:
            log('Nothing to record. Skipping..', error=True)
        return
    _data_blocks.append((record_type, data))
    if verbose:
        log(record_type.capitalize() + ' logged.')


def log_hyperparams(data_dict=None, verbose=True, **data_args):
    """Record hyperparameters for the current fit

    Args:
        data_dict(dict, optional): A python dict to be recorded as hyperparameters.

        verbose(bool, optional): By default it prints the acknowledgement, you can remove
            this by setting the argument to False.

        **data_args(optional): Instead of passing a dictionary, you can also pass each
            individual key-value pair as a argument

    Example
        .. code-block::

            log_hyperparams(tau=0.1, margin=3)
    """
    log_record('hyperparams', data_dict, verbose, **data_args)


def log_metrics(data_dict=None, verbose=True, **data_args):
    """Record metrics (e.g. the final loss of a stage) for the current fit

    Example
        .. code-block::

            log_metrics(stage=2, final_loss=0.031, iterations=300)
    """
    log_record('metrics', data_dict, verbose, **data_args)
