# Evaluation batch: guarded harness run per candidate.
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

import signal

_TIMEOUT = 10.0
_ENTRY_POINT = "threeSum"
_TEST_HARNESS_CODE = "def check(candidate):\n    threeSum = candidate\n    assert threeSum([-1, 0, 1, 2, -1, -4], 0) == [[-1, -1, 2], [-1, 0, 1]]\n    assert threeSum([1, 2, -2, -1], 1) == [[-2, 1, 2]]\n    assert threeSum([0, 0, 0], 0) == [[0, 0, 0]]\n    assert threeSum([], 0) == []\n    assert threeSum([3, 0, -2, -1, 1, 2], 0) == [[-2, -1, 3], [-2, 0, 2], [-1, 0, 1]]\n    assert threeSum([-1, 0, 1, 2, -1, -4, -2, -3, 3, 0, 4], 0) == [[-4, 0, 4], [-4, 1, 3], [-3, -1, 4], [-3, 0, 3], [-3, 1, 2], [-2, -1, 3], [-2, 0, 2], [-1, -1, 2], [-1, 0, 1]]\n    assert threeSum([1, 2, 3, 4], 10) == []\n    assert threeSum([-1, 2, 1, 4], 8) == []\n"
_CANDIDATES = [
    "from typing import List\ndef threeSum(nums: List[int], target: int) -> List[List[int]]:\n    nums.sort()  # Sort the array to help avoid duplicates and use two-pointer strategy\n    result = []\n    \n    for i in range(len(nums) - 2):\n        if i > 0 and nums[i] == nums[i - 1]:  # Skip the same element to avoid duplicates\n            continue\n        \n        left, right = i + 1, len(nums) - 1\n        while left < right:\n            current_sum = nums[i] + nums[left] + nums[right]\n            if current_sum == target:\n                result.append([nums[i], nums[left], nums[right]])\n                while left < right and nums[left] == nums[left + 1]:  # Skip duplicates\n                    left += 1\n                while left < right and nums[right] == nums[right - 1]:  # Skip duplicates\n                    right -= 1\n                left += 1\n                right -= 1\n            elif current_sum < target:\n                left += 1\n            else:\n                right -= 1\n    \n    return result",
    "def threeSum(nums, target):\n    nums.sort()\n    res = []\n    n = len(nums)\n    for i in range(n):\n        if i > 0 and nums[i] == nums[i-1]:\n            continue\n        l, r = i + 1, n - 1\n        while l < r:\n            s = nums[i] + nums[l] + nums[r]\n            if s == target:\n                res.append([nums[i], nums[l], nums[r]])\n                l += 1\n                r -= 1\n            elif s < target:\n                l += 1\n            else:\n                r -= 1\n    return res",
]


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


def c_0():
    with _quiet():
        _harness['check'](_load(0))


def c_1():
    with _quiet():
        _harness['check'](_load(1))


run_safe(c_0)
run_safe(c_1)
