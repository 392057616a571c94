from dtkd.profiling.timing import Interval, Timer

__all__ = ["Interval", "Timer"]
