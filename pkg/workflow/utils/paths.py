import pathlib

DEFAULT_OUTPUT_DIR = "results"


def get_output_dir(out_dir=None) -> pathlib.Path:
    out = pathlib.Path(out_dir or DEFAULT_OUTPUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


def get_traces_dir(out_dir, label: str) -> pathlib.Path:
    # Folder structure: out / traces / <sweep label> / run_XXXX.txt
    traces_dir = get_output_dir(out_dir) / "traces" / label
    traces_dir.mkdir(parents=True, exist_ok=True)
    return traces_dir


def get_figures_dir(out_dir) -> pathlib.Path:
    figures_dir = get_output_dir(out_dir) / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    return figures_dir
