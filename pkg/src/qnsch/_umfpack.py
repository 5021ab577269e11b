"""Minimal ctypes binding to the system UMFPACK library (SuiteSparse).

Only the calls needed for factor/solve with a reusable symbolic analysis are
bound. :func:`available` reports whether the shared library could be loaded.
"""

import ctypes
import ctypes.util
import logging

import numpy as np

log = logging.getLogger(__name__)

_CONTROL = 20
_INFO = 90
_STRATEGY = 5
_IRSTEP = 7
_ORDERING = 10
_ORDERING_METIS = 3
_LNZ, _UNZ = 43, 44
_SYS_A, _SYS_AT = 0, 1
_WARNING_SINGULAR = 1

_lib = None
_tried = False


def _load():
    global _lib, _tried
    if _tried:
        return _lib
    _tried = True
    names = [ctypes.util.find_library("umfpack"), "libumfpack.so.5", "libumfpack.so"]
    for name in names:
        if not name:
            continue
        try:
            lib = ctypes.CDLL(name)
        except OSError:
            continue
        L, P, D = ctypes.c_int64, ctypes.c_void_p, ctypes.POINTER(ctypes.c_double)
        PP = ctypes.POINTER(P)
        lib.umfpack_dl_defaults.argtypes = [D]
        lib.umfpack_dl_defaults.restype = None
        lib.umfpack_dl_symbolic.argtypes = [L, L, P, P, P, PP, D, D]
        lib.umfpack_dl_symbolic.restype = L
        lib.umfpack_dl_numeric.argtypes = [P, P, P, P, PP, D, D]
        lib.umfpack_dl_numeric.restype = L
        lib.umfpack_dl_solve.argtypes = [L, P, P, P, P, P, P, D, D]
        lib.umfpack_dl_solve.restype = L
        lib.umfpack_dl_free_symbolic.argtypes = [PP]
        lib.umfpack_dl_free_symbolic.restype = None
        lib.umfpack_dl_free_numeric.argtypes = [PP]
        lib.umfpack_dl_free_numeric.restype = None
        _lib = lib
        log.debug("loaded UMFPACK from %s", name)
        break
    return _lib


def available():
    return _load() is not None


class UmfpackError(RuntimeError):
    def __init__(self, stage, status):
        super().__init__(f"UMFPACK {stage} failed with status {status}")
        self.status = status


class Symbolic:
    """Symbolic analysis of a column-compressed pattern, reusable for equal patterns."""

    def __init__(self, n, indptr, indices, data):
        lib = _load()
        self.n = n
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.control = (ctypes.c_double * _CONTROL)()
        lib.umfpack_dl_defaults(self.control)
        self.control[_ORDERING] = _ORDERING_METIS
        self.control[_IRSTEP] = 0
        self.info = (ctypes.c_double * _INFO)()
        self.handle = ctypes.c_void_p()
        data = np.ascontiguousarray(data, dtype=float)
        st = lib.umfpack_dl_symbolic(n, n, self.indptr.ctypes.data, self.indices.ctypes.data,
                                     data.ctypes.data, ctypes.byref(self.handle), self.control, self.info)
        if st != 0:
            raise UmfpackError("symbolic analysis", st)

    def matches(self, indptr, indices):
        return (len(indptr) == len(self.indptr) and len(indices) == len(self.indices)
                and np.array_equal(indptr, self.indptr) and np.array_equal(indices, self.indices))

    def __del__(self):
        if _lib is not None and self.handle:
            _lib.umfpack_dl_free_symbolic(ctypes.byref(self.handle))


class Factor:
    """Numeric LU factorization of a compressed-column matrix.

    With ``transposed=True`` the arrays are read as the CSR form of ``A``
    (i.e. the CSC form of ``A^T``) and :meth:`solve` still solves ``A x = b``.
    """

    def __init__(self, symbolic, data, transposed=False):
        lib = _load()
        self.sym = symbolic
        self.data = np.ascontiguousarray(data, dtype=float)
        self.transposed = transposed
        self.info = (ctypes.c_double * _INFO)()
        self.handle = ctypes.c_void_p()
        st = lib.umfpack_dl_numeric(symbolic.indptr.ctypes.data, symbolic.indices.ctypes.data,
                                    self.data.ctypes.data, symbolic.handle, ctypes.byref(self.handle),
                                    symbolic.control, self.info)
        if st == _WARNING_SINGULAR:
            raise UmfpackError("numeric factorization (singular matrix)", st)
        if st != 0:
            raise UmfpackError("numeric factorization", st)
        self.fill = int(self.info[_LNZ] + self.info[_UNZ])

    def solve(self, b):
        b = np.ascontiguousarray(b, dtype=float)
        x = np.empty_like(b)
        sym = self.sym
        st = _lib.umfpack_dl_solve(_SYS_AT if self.transposed else _SYS_A,
                                   sym.indptr.ctypes.data, sym.indices.ctypes.data, self.data.ctypes.data,
                                   x.ctypes.data, b.ctypes.data, self.handle, sym.control, self.info)
        if st != 0:
            raise UmfpackError("solve", st)
        return x

    def __del__(self):
        if _lib is not None and self.handle:
            _lib.umfpack_dl_free_numeric(ctypes.byref(self.handle))
