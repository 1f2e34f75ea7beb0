import json
import os
import platform
import subprocess

import numpy as np
import pandas as pd

from niftrace import name as package_name


def type_of_script():
    try:
        ipy_str = str(type(get_ipython()))
        if 'zmqshell' in ipy_str:
            return 'jupyter'
        if 'terminal' in ipy_str:
            return 'ipython'
    except NameError:
        return 'terminal'
    return 'terminal'


backend = type_of_script()
if backend == 'jupyter':
    from tqdm import tqdm_notebook as tqdm
else:
    from tqdm import tqdm as tqdm


def progress(iterable=None, total=None, desc=None, disable=False):
    """
    Progress bar matching the current front end (notebook or terminal).
    """
    return tqdm(iterable, total=total, desc=desc, disable=disable, leave=False)


def code_version():
    """
    Returns the git revision of the working tree when available, otherwise the package version.
    """
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return rev.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        from importlib.metadata import version
        return version(package_name)
    except Exception:
        return "unknown"


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_manifest(path, command, config, inputs, outputs, seed, wall_time):
    """
    Writes the run manifest next to the outputs of a command.

    Args:
        path: manifest file name (.json).
        command: CLI verb.
        config: fully resolved configuration (JSON-serialisable dict).
        inputs: dict of input paths.
        outputs: dict of output paths.
        seed: random seed used.
        wall_time: elapsed seconds.

    Returns:
        the manifest dictionary.
    """
    manifest = {
        "command": command,
        "config": _jsonable(config),
        "inputs": _jsonable(inputs),
        "outputs": _jsonable(outputs),
        "seed": seed,
        "code_version": code_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time": wall_time,
    }
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    with open(path, "w") as f:
        f.write(json.dumps(manifest, indent=2))
    return manifest


def read_manifest(path):
    with open(path) as f:
        return json.load(f)


def manifest_path(output_path):
    """
    Manifest file name that sits next to an output file.
    """
    root, _ = os.path.splitext(output_path)
    return root + ".manifest.json"


def save_table(data, filename):
    """
    Saves a dict of columns (or a DataFrame) to csv.
    """
    if isinstance(data, pd.DataFrame):
        df = data
    else:
        df = pd.DataFrame.from_dict(data)
    folder = os.path.dirname(os.path.abspath(filename))
    os.makedirs(folder, exist_ok=True)
    df.to_csv(filename, index=False)
    return df
