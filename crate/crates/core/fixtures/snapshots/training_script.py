# Training batch: calibrate-then-evaluate.
import contextlib as _contextlib
import sys as _sys

_NONCE = "0123abcd"
_OUT = _sys.stdout
_PRELUDE = "from typing import *\nimport bisect, collections, functools, heapq, itertools, math, re, string\n"


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

_GT_CODE = "from typing import List\ndef threeSum(nums: List[int], target: int) -> List[List[int]]:\n    nums.sort()  # Sort the array to help avoid duplicates and use two-pointer strategy\n    result = []\n    \n    for i in range(len(nums) - 2):\n        if i > 0 and nums[i] == nums[i - 1]:  # Skip the same element to avoid duplicates\n            continue\n        \n        left, right = i + 1, len(nums) - 1\n        while left < right:\n            current_sum = nums[i] + nums[left] + nums[right]\n            if current_sum == target:\n                result.append([nums[i], nums[left], nums[right]])\n                while left < right and nums[left] == nums[left + 1]:  # Skip duplicates\n                    left += 1\n                while left < right and nums[right] == nums[right - 1]:  # Skip duplicates\n                    right -= 1\n                left += 1\n                right -= 1\n            elif current_sum < target:\n                left += 1\n            else:\n                right -= 1\n    \n    return result\n"
_GT_FUNCTION_NAMES = ["threeSum"]
_SUITES_PER_CANDIDATE = 1
# One entry per suite (candidate-major): normalized statements, calls,
# expected answers, host-side invalid count.
_SUITES = [
    (
        ["assert threeSum([0, 0, 0, 0, 0], 0) == __TO_BE_FILLED__", "assert threeSum([-2, 1, 1, 1, 1], 0) == __TO_BE_FILLED__", "assert threeSum([-2, 0, 0, 2, 2], 0) == __TO_BE_FILLED__", "assert threeSum([-1, -1, -1, 2, 2], 0) == __TO_BE_FILLED__", "assert threeSum([-4, 2, 2, 2, 2], 0) == __TO_BE_FILLED__"],
        ["threeSum([0, 0, 0, 0, 0], 0)", "threeSum([-2, 1, 1, 1, 1], 0)", "threeSum([-2, 0, 0, 2, 2], 0)", "threeSum([-1, -1, -1, 2, 2], 0)", "threeSum([-4, 2, 2, 2, 2], 0)"],
        ["[[0, 0, 0]]", "[[-2, 1, 1]]", "[[-2, 0, 2]]", "[[-1, -1, 2]]", "[[-4, 2, 2]]"],
        0,
    ),
    (
        ["assert threeSum([-1, 0, 1], 0) == __TO_BE_FILLED__", "assert threeSum([], 0) == __TO_BE_FILLED__", "assert threeSum([0, 0, 0], 0) == __TO_BE_FILLED__", "assert threeSum([0, 0, 0, 0], 0) == __TO_BE_FILLED__", "assert threeSum([-1, 0, 1, 2, -1, -4], 0) == __TO_BE_FILLED__"],
        ["threeSum([-1, 0, 1], 0)", "threeSum([], 0)", "threeSum([0, 0, 0], 0)", "threeSum([0, 0, 0, 0], 0)", "threeSum([-1, 0, 1, 2, -1, -4], 0)"],
        ["[[-1, 0, 1]]", "[]", "[[0, 0, 0]]", "[[0, 0, 0]]", "[[-1, -1, 2], [-1, 0, 1]]"],
        0,
    ),
]
_GT_TESTCASE_LIST = [
    "assert threeSum([-1, 0, 1, 2, -1, -4], 0) == [[-1, -1, 2], [-1, 0, 1]]",
    "assert threeSum([1, 2, -2, -1], 1) == [[-2, 1, 2]]",
    "assert threeSum([0, 0, 0], 0) == [[0, 0, 0]]",
    "assert threeSum([], 0) == []",
    "assert threeSum([3, 0, -2, -1, 1, 2], 0) == [[-2, -1, 3], [-2, 0, 2], [-1, 0, 1]]",
    "assert threeSum([-1, 0, 1, 2, -1, -4, -2, -3, 3, 0, 4], 0) == [[-4, 0, 4], [-4, 1, 3], [-3, -1, 4], [-3, 0, 3], [-3, 1, 2], [-2, -1, 3], [-2, 0, 2], [-1, -1, 2], [-1, 0, 1]]",
    "assert threeSum([1, 2, 3, 4], 10) == []",
    "assert threeSum([-1, 2, 1, 4], 8) == []",
]
_ATTACK_TESTCASE_LIST = [
    "assert threeSum([0, 0, 0, 0], 0) == [[0, 0, 0]]",
]
_CANDIDATES = [
    "from typing import List\ndef threeSum(nums: List[int], target: int) -> List[List[int]]:\n    nums.sort()  # Sort the array to help avoid duplicates and use two-pointer strategy\n    result = []\n    \n    for i in range(len(nums) - 2):\n        if i > 0 and nums[i] == nums[i - 1]:  # Skip the same element to avoid duplicates\n            continue\n        \n        left, right = i + 1, len(nums) - 1\n        while left < right:\n            current_sum = nums[i] + nums[left] + nums[right]\n            if current_sum == target:\n                result.append([nums[i], nums[left], nums[right]])\n                while left < right and nums[left] == nums[left + 1]:  # Skip duplicates\n                    left += 1\n                while left < right and nums[right] == nums[right - 1]:  # Skip duplicates\n                    right -= 1\n                left += 1\n                right -= 1\n            elif current_sum < target:\n                left += 1\n            else:\n                right -= 1\n    \n    return result",
    "def threeSum(nums, target):\n    nums.sort()\n    res = []\n    n = len(nums)\n    for i in range(n):\n        if i > 0 and nums[i] == nums[i-1]:\n            continue\n        l, r = i + 1, n - 1\n        while l < r:\n            s = nums[i] + nums[l] + nums[r]\n            if s == target:\n                res.append([nums[i], nums[l], nums[r]])\n                l += 1\n                r -= 1\n            elif s < target:\n                l += 1\n            else:\n                r -= 1\n    return res",
]

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
