from hypothesis import settings

try:
    from threadpoolctl import threadpool_limits

    # tiny matrices: threaded BLAS only adds contention and nondeterminism risk
    _LIMITER = threadpool_limits(limits=1)
except ImportError:  # pragma: no cover
    _LIMITER = None

settings.register_profile("local", deadline=None)
settings.load_profile("local")
