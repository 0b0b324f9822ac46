//! Guest script skeletons. Placeholders have the form `{{NAME}}` and are
//! substituted verbatim by the builders in the parent module.

/// Shared helpers: nonce-tagged marker printing, stdout silencing for guest
/// code, and fresh namespaces with the common imports.
pub(super) const PREAMBLE: &str = r#"import contextlib as _contextlib
import sys as _sys

_NONCE = {{NONCE}}
_OUT = _sys.stdout
_PRELUDE = {{PRELUDE}}


class _Sink:
    def write(self, s):
        return len(s)

    def flush(self):
        pass


def _quiet():
    return _contextlib.redirect_stdout(_Sink())


def _mark(kind, ids='', payload=None):
    line = '__' + kind + '__' + ('[' + _NONCE + ']' if _NONCE else '') + ids
    if payload is not None:
        line += ':' + payload
    print(line, file=_OUT, flush=True)


def _fresh():
    ns = {'__name__': '__candidate__', '__builtins__': __builtins__}
    exec(_PRELUDE, ns)
    return ns
"#;

/// Imports made available to the oracle, candidates and harness.
pub(super) const PRELUDE: &str = "from typing import *\nimport bisect, collections, functools, heapq, itertools, math, re, string\n";

/// Training batch: calibrate generated tests against the oracle, delete the
/// oracle, then evaluate each candidate on golden, historical and validated
/// generated tests.
pub(super) const TRAINING: &str = r#"# Training batch: calibrate-then-evaluate.
{{PREAMBLE}}
_GT_CODE = {{GT_CODE}}
_GT_FUNCTION_NAMES = {{GT_FUNCTION_NAMES}}
_SUITES_PER_CANDIDATE = {{SUITES_PER_CANDIDATE}}
# One entry per suite (candidate-major): normalized statements, calls,
# expected answers, host-side invalid count.
_SUITES = {{SUITES}}
_GT_TESTCASE_LIST = {{GT_TESTCASE_LIST}}
_ATTACK_TESTCASE_LIST = {{ATTACK_TESTCASE_LIST}}
_CANDIDATES = {{CANDIDATES}}

valid_asserts_list = []
try:
    _gt_ns = _fresh()
    if _GT_CODE is not None:
        with _quiet():
            exec(compile(_GT_CODE, '<ground_truth>', 'exec'), _gt_ns)
    for _s, (_stmts, _calls, _answers, _invalid) in enumerate(_SUITES):
        invalid_count = _invalid
        valid_asserts = []
        seen = set()
        for _j, (stmt, call, ans) in enumerate(zip(_stmts, _calls, _answers)):
            _id = str(_s) + '_' + str(_j)
            if stmt is None:
                valid_asserts.append(None)
                continue
            try:
                with _quiet():
                    _r = eval(call if _GT_CODE is not None else ans, _gt_ns)
                stmt = stmt.replace('__TO_BE_FILLED__', repr(_r))
                if stmt in seen:
                    invalid_count += 1
                    valid_asserts.append(None)
                    _mark('INVALID_TEST', _id, 'duplicate')
                    continue
                seen.add(stmt)
                valid_asserts.append({'val': _r, 'stmt': stmt})
                _mark('GEN_START', _id, repr(stmt))
            except BaseException:
                invalid_count += 1
                valid_asserts.append(None)
                _mark('INVALID_TEST', _id, 'error')
                continue
            if _GT_CODE is not None:
                try:
                    with _quiet():
                        _ok = bool((_r) == (eval(ans, _gt_ns)))
                except BaseException:
                    _ok = False
                if not _ok:
                    invalid_count += 1
                    _mark('INVALID_TEST', _id, 'wrong')
        _mark('INVALID_TEST', str(_s), str(invalid_count))
        valid_asserts_list.append(valid_asserts)
except BaseException:
    pass

for gt_fn in _GT_FUNCTION_NAMES:
    try:
        del _gt_ns[gt_fn]
    except BaseException:
        pass
_gt_ns = None

for _m, _src in enumerate(_CANDIDATES):
    try:
        if not _src.strip():
            raise SyntaxError('empty candidate')
        _ns = _fresh()
        with _quiet():
            exec(compile(_src, '<candidate_' + str(_m) + '>', 'exec'), _ns)
        _mark('CODE_VALID', str(_m))

        for idx, test_item in enumerate(_GT_TESTCASE_LIST):
            try:
                with _quiet():
                    exec(test_item, _ns)
                _mark('GT_PASS', str(_m) + '_' + str(idx))
            except BaseException as e:
                _mark('GT_FAIL', str(_m) + '_' + str(idx), repr(e)[:200])

        for idx, test_item in enumerate(_ATTACK_TESTCASE_LIST):
            _mark('ATTACK_START', str(_m) + '_' + str(idx), repr(repr(test_item)))
            try:
                with _quiet():
                    exec(test_item, _ns)
                _mark('ATTACK_PASS', str(_m) + '_' + str(idx))
            except BaseException as e:
                _mark('ATTACK_FAIL', str(_m) + '_' + str(idx), repr(e)[:200])

        for _n in range(_SUITES_PER_CANDIDATE):
            _s = _m * _SUITES_PER_CANDIDATE + _n
            valid_asserts = valid_asserts_list[_s]
            for j, call in enumerate(_SUITES[_s][1]):
                spec = valid_asserts[j]
                if spec is not None:
                    _id = str(_s) + '_' + str(j)
                    try:
                        with _quiet():
                            _got = eval(call, _ns)
                            if not bool(_got == spec['val']):
                                raise AssertionError()
                        _mark('GEN_PASS', _id)
                    except BaseException as e:
                        _mark('GEN_FAIL', _id, repr(e)[:200])
    except BaseException:
        pass
"#;

/// Evaluation batch: each candidate runs the harness `check` under its own
/// interval-timer guard and prints exactly one of PASS, TIMEOUT or FAIL.
pub(super) const EVALUATION: &str = r#"# Evaluation batch: guarded harness run per candidate.
{{PREAMBLE}}
import signal

_TIMEOUT = {{TIMEOUT}}
_ENTRY_POINT = {{ENTRY_POINT}}
_TEST_HARNESS_CODE = {{TEST_HARNESS_CODE}}
_CANDIDATES = {{CANDIDATES}}


class TO(BaseException): pass
def handler(s, f): raise TO()


def run_safe(func):
    try:
        signal.signal(signal.SIGALRM, handler)
        signal.setitimer(signal.ITIMER_REAL, _TIMEOUT)
        func()
        signal.setitimer(signal.ITIMER_REAL, 0)
        _mark('PASS')
    except TO:
        _mark('TIMEOUT')
    except BaseException:
        signal.setitimer(signal.ITIMER_REAL, 0)
        _mark('FAIL')


_harness = _fresh()
try:
    exec(compile(_TEST_HARNESS_CODE, '<harness>', 'exec'), _harness)
except BaseException:
    pass


def _load(i):
    src = _CANDIDATES[i]
    if not src.strip():
        raise SyntaxError('empty candidate')
    ns = _fresh()
    exec(compile(src, '<candidate_' + str(i) + '>', 'exec'), ns)
    return ns[_ENTRY_POINT]

{{CANDIDATE_FUNCTIONS}}
{{RUN_CALLS}}"#;
