# Test harness executed inside the sandbox interpreter.
#
# Reads one JSON document from stdin:
#   {"source": str, "per_test_timeout_ms": int,
#    "tests": [{"id", "function", "args", "expected", "comparison", "epsilon"?}]}
# Writes to the original stdout:
#   one handshake line {"compile_ok": bool, "message"?}
#   then one line per test {"test_id", "status", "actual"?, "error_kind"?, "message"?, "elapsed_ms"}
# Student output is redirected to stderr. Exit code is 0 whenever the harness itself ran.
import json
import math
import os
import signal
import sys
import time

_request = json.loads(sys.stdin.read())
_out = os.fdopen(os.dup(1), "w", buffering=1)
os.dup2(2, 1)
sys.stdout = sys.stderr


def _emit(obj):
    _out.write(json.dumps(obj) + "\n")
    _out.flush()


class _HarnessTimeout(BaseException):
    pass


def _on_alarm(signum, frame):
    raise _HarnessTimeout()


signal.signal(signal.SIGALRM, _on_alarm)

_BLOCKED_PREFIXES = (
    "socket.",
    "subprocess.",
    "os.system",
    "os.exec",
    "os.fork",
    "os.posix_spawn",
    "os.spawn",
    "os.kill",
    "os.remove",
    "os.rename",
    "os.rmdir",
    "os.mkdir",
    "os.chmod",
    "os.chown",
    "os.truncate",
    "os.symlink",
    "os.link",
    "os.putenv",
    "shutil.",
    "ctypes.",
    "urllib.",
    "http.",
    "ftplib.",
    "smtplib.",
    "sys.setrecursionlimit",
)


def _audit(event, args):
    if event == "open":
        mode = args[1] if len(args) > 1 else "r"
        flags = args[2] if len(args) > 2 else 0
        if isinstance(mode, str) and any(c in mode for c in "wax+"):
            raise PermissionError("sandbox: filesystem writes are not permitted")
        if isinstance(flags, int) and flags & (os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC):
            raise PermissionError("sandbox: filesystem writes are not permitted")
        return
    for prefix in _BLOCKED_PREFIXES:
        if event.startswith(prefix):
            raise PermissionError("sandbox: operation not permitted: " + event)


def _normalize(value):
    return json.loads(json.dumps(value))


def _exact(actual, expected):
    if isinstance(actual, bool) or isinstance(expected, bool):
        return isinstance(actual, bool) and isinstance(expected, bool) and actual == expected
    if isinstance(actual, list) and isinstance(expected, list):
        return len(actual) == len(expected) and all(_exact(a, e) for a, e in zip(actual, expected))
    if isinstance(actual, dict) and isinstance(expected, dict):
        return actual.keys() == expected.keys() and all(_exact(actual[k], expected[k]) for k in actual)
    return type(actual) in (int, float) and type(expected) in (int, float) and actual == expected or (
        type(actual) is type(expected) and actual == expected
    )


def _matches(actual, expected, comparison, epsilon):
    if comparison == "numeric":
        if isinstance(actual, bool) or not isinstance(actual, (int, float)):
            return False
        if isinstance(expected, bool) or not isinstance(expected, (int, float)):
            return False
        return math.isfinite(actual) and abs(actual - expected) <= epsilon
    return _exact(actual, expected)


def _kind_of(exc):
    if isinstance(exc, RecursionError):
        return "RecursionLimit"
    if isinstance(exc, MemoryError):
        return "MemoryLimit"
    if isinstance(exc, SyntaxError):
        return "SyntaxError"
    return "RuntimeError"


def _describe(exc):
    return "%s: %s" % (type(exc).__name__, exc)


try:
    _code = compile(_request["source"], "student.py", "exec")
except SyntaxError as exc:
    _emit({"compile_ok": False, "message": _describe(exc)})
    sys.exit(0)
except ValueError as exc:
    _emit({"compile_ok": False, "message": _describe(exc)})
    sys.exit(0)

_emit({"compile_ok": True})

_timeout_s = max(int(_request.get("per_test_timeout_ms", 2000)), 1) / 1000.0
_namespace = {"__name__": "__student__"}
_load_error = None

sys.addaudithook(_audit)

signal.setitimer(signal.ITIMER_REAL, _timeout_s)
try:
    exec(_code, _namespace)
except _HarnessTimeout:
    _load_error = ("Timeout", "module-level code exceeded the time limit")
except BaseException as exc:
    _load_error = (_kind_of(exc), _describe(exc))
finally:
    signal.setitimer(signal.ITIMER_REAL, 0)

for _test in _request["tests"]:
    _record = {"test_id": _test["id"]}
    _start = time.monotonic()
    if _load_error is not None:
        _record["status"] = "raised"
        _record["error_kind"], _record["message"] = _load_error
    else:
        _fn = _namespace.get(_test["function"])
        if not callable(_fn):
            _record["status"] = "raised"
            _record["error_kind"] = "RuntimeError"
            _record["message"] = "NameError: function '%s' is not defined" % _test["function"]
        else:
            try:
                signal.setitimer(signal.ITIMER_REAL, _timeout_s)
                try:
                    _actual = _fn(*_test["args"])
                finally:
                    signal.setitimer(signal.ITIMER_REAL, 0)
                try:
                    _actual = _normalize(_actual)
                except (TypeError, ValueError):
                    _record["status"] = "wrong_value"
                    _record["actual"] = repr(_actual)
                else:
                    if _matches(_actual, _test["expected"], _test.get("comparison", "exact"), _test.get("epsilon", 0.0)):
                        _record["status"] = "pass"
                    else:
                        _record["status"] = "wrong_value"
                        _record["actual"] = _actual
            except _HarnessTimeout:
                _record["status"] = "raised"
                _record["error_kind"] = "Timeout"
                _record["message"] = "test exceeded the time limit"
            except BaseException as exc:
                _record["status"] = "raised"
                _record["error_kind"] = _kind_of(exc)
                _record["message"] = _describe(exc)[:500]
    _record["elapsed_ms"] = int((time.monotonic() - _start) * 1000)
    _emit(_record)

sys.exit(0)
