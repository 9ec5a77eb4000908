"""
module.py

Modules are one-off runnable tasks. Every sweep cell (lower a layer, simulate one
design point) is a Module, so a sweep can run its cells in-process or spread them
over worker processes with run_modules().
"""
import sys
import traceback
import multiprocessing
from multiprocessing.pool import Pool

from tilearray.errors import TileArrayError

# Module states
NOT_STARTED = 0
RUNNING = 1
DONE = 2


class AsyncException(TileArrayError):
    """
    Exception returned from an AsyncModule run in a worker process. Carries the original
    traceback as a string under "traceback" and the original message under "message"
    """
    traceback = None
    message = None


class NoDaemonProcess(multiprocessing.Process):
    @property
    def daemon(self):
        return False

    @daemon.setter
    def daemon(self, value):
        pass


class NoDaemonContext(type(multiprocessing.get_context())):
    Process = NoDaemonProcess


class NonDaemonizedPool(Pool):
    def __init__(self, *args, **kwargs):
        kwargs['context'] = NoDaemonContext()
        super(NonDaemonizedPool, self).__init__(*args, **kwargs)


class Module(object):
    """
    Base module class. Subclasses must override run()
    """
    id = ''

    def run(self, kwargs=None):
        raise NotImplementedError("module %s does not implement run()" % type(self).__name__)


class AsyncModule(Module):
    """
    Builds on Module for cells that can run in a separate process. Hand them to run_modules().
    """
    status = None
    result = None
    exception = None

    def __init__(self):
        self.status = NOT_STARTED

    def __setup__(self, kwargs):
        """
        Calls run(); exceptions are converted so they survive the trip back to the parent process
        """
        try:
            return self.run(kwargs=kwargs)
        except Exception as e:
            exc = AsyncException(str(e))
            exc.message = str(e)
            exc.traceback = "".join(traceback.format_exception(*sys.exc_info()))
            return exc

    def __finish_internal__(self, callback_args):
        self.status = DONE
        self.finish(callback_args)

    def finish(self, results):
        if isinstance(results, Exception):
            self.exception = results
        else:
            self.result = results


def run_modules(modules, jobs=1, kwargs=None):
    """
    Run a list of AsyncModules and collect their results in list order
    :param modules: list of AsyncModule
    :param jobs: worker processes; 1 runs everything in this process
    :return: list of results
    :raises AsyncException: the first failure, with the worker's traceback attached
    """
    kwargs = kwargs or {}
    for m in modules:
        m.status = RUNNING
    if jobs <= 1 or len(modules) <= 1:
        results = [m.__setup__(kwargs) for m in modules]
        for m, r in zip(modules, results):
            m.__finish_internal__(r)
    else:
        pool = NonDaemonizedPool(processes=min(jobs, len(modules)))
        try:
            pending = [pool.apply_async(m.__setup__, [kwargs]) for m in modules]
            results = [p.get() for p in pending]
        finally:
            pool.close()
            pool.join()
        for m, r in zip(modules, results):
            m.__finish_internal__(r)
    for m in modules:
        if m.exception is not None:
            raise m.exception
    return results
