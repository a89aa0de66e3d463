from decouple import config

threads: int = config("CCDIST_THREADS", default=1, cast=int)
var_dir: str = config("CCDIST_VAR_DIR", default="var")
log_file_name: str = config("CCDIST_LOG_FILE", default="ccdist.log")
error_log_file_name: str = config("CCDIST_ERROR_LOG_FILE", default="ccdist_error.log")
database_url: str = config("CCDIST_DATABASE_URL", default="sqlite:///ccdist_runs.db")
default_seed: int = config("CCDIST_SEED", default=20240601, cast=int)
default_max_k: int = config("CCDIST_MAX_K", default=8, cast=int)


def max_workers() -> int:
    """Thread cap for restart and quadrature pools, never below one."""
    return max(1, threads)
