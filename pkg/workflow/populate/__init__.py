from .runner import run_batch, run_single, run_sweep
