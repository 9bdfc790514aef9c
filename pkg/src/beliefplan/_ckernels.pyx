"""Compiled belief kernels.

Same contracts and the same floating-point operation order as ``_pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()

BACKEND = "compiled"

cdef double MIN_EVIDENCE_C = 1e-300
MIN_EVIDENCE = MIN_EVIDENCE_C


cdef void _predict(const double[::1] phi, const double[:, ::1] trans, double[::1] out) noexcept nogil:
    cdef Py_ssize_t s, t, n = phi.shape[0], m = trans.shape[1]
    cdef double p
    for t in range(m):
        out[t] = 0.0
    for s in range(n):
        p = phi[s]
        if p != 0.0:
            for t in range(m):
                out[t] += p * trans[s, t]


cdef void _obs_probs(const double[::1] pred, const double[:, ::1] obs, double[::1] out) noexcept nogil:
    cdef Py_ssize_t s, o, n = pred.shape[0], m = obs.shape[1]
    cdef double p
    for o in range(m):
        out[o] = 0.0
    for s in range(n):
        p = pred[s]
        if p != 0.0:
            for o in range(m):
                out[o] += p * obs[s, o]


cdef void _project(const double[::1] phi, const Py_ssize_t[:, ::1] class_index,
                   const Py_ssize_t[::1] offsets, double[::1] margs, double[::1] out) noexcept nogil:
    cdef Py_ssize_t k, s, n = phi.shape[0], n_classes = class_index.shape[0]
    cdef double v
    for s in range(margs.shape[0]):
        margs[s] = 0.0
    for k in range(n_classes):
        for s in range(n):
            margs[offsets[k] + class_index[k, s]] += phi[s]
    for s in range(n):
        v = margs[offsets[0] + class_index[0, s]]
        for k in range(1, n_classes):
            v = v * margs[offsets[k] + class_index[k, s]]
        out[s] = v


cdef _offsets(const Py_ssize_t[::1] class_sizes):
    offsets = np.zeros(class_sizes.shape[0], dtype=np.intp)
    cdef Py_ssize_t k, acc = 0
    for k in range(class_sizes.shape[0]):
        offsets[k] = acc
        acc += class_sizes[k]
    return offsets, acc


def predict(const double[::1] phi, const double[:, ::1] trans):
    out = np.empty(trans.shape[1])
    _predict(phi, trans, out)
    return out


def obs_probs(const double[::1] pred, const double[:, ::1] obs):
    out = np.empty(obs.shape[1])
    _obs_probs(pred, obs, out)
    return out


def condition(const double[::1] pred, const double[::1] obs_col):
    cdef Py_ssize_t s, n = pred.shape[0]
    cdef double z = 0.0
    post = np.zeros(n)
    cdef double[::1] p = post
    for s in range(n):
        p[s] = pred[s] * obs_col[s]
        z += p[s]
    if z <= MIN_EVIDENCE_C:
        p[:] = 0.0
        return post, z
    for s in range(n):
        p[s] = p[s] / z
    return post, z


def expected(const double[::1] phi, const double[::1] values):
    cdef Py_ssize_t s
    cdef double acc = 0.0
    for s in range(phi.shape[0]):
        acc += phi[s] * values[s]
    return acc


def marginals(const double[::1] phi, const Py_ssize_t[:, ::1] class_index, const Py_ssize_t[::1] class_sizes):
    cdef Py_ssize_t k, s
    out = []
    cdef double[::1] m
    for k in range(class_index.shape[0]):
        arr = np.zeros(class_sizes[k])
        m = arr
        for s in range(phi.shape[0]):
            m[class_index[k, s]] += phi[s]
        out.append(arr)
    return out


def project(const double[::1] phi, const Py_ssize_t[:, ::1] class_index, const Py_ssize_t[::1] class_sizes):
    offsets, total = _offsets(class_sizes)
    margs = np.empty(total)
    out = np.empty(phi.shape[0])
    _project(phi, class_index, offsets, margs, out)
    return out


def expand(const double[::1] phi, const double[:, :, ::1] trans, const double[:, ::1] obs,
           const Py_ssize_t[:, ::1] class_index, const Py_ssize_t[::1] class_sizes):
    cdef Py_ssize_t n_actions = trans.shape[0], n_states = obs.shape[0], n_obs = obs.shape[1]
    cdef Py_ssize_t a, o, s
    cdef double z
    probs_arr = np.zeros((n_actions, n_obs))
    children_arr = np.zeros((n_actions, n_obs, n_states))
    offsets_arr, total = _offsets(class_sizes)
    margs_arr = np.empty(total)
    pred_arr = np.empty(n_states)
    post_arr = np.empty(n_states)
    cdef double[:, ::1] probs = probs_arr
    cdef double[:, :, ::1] children = children_arr
    cdef double[::1] pred = pred_arr
    cdef double[::1] post = post_arr
    cdef double[::1] margs = margs_arr
    cdef const Py_ssize_t[::1] offsets = offsets_arr
    with nogil:
        for a in range(n_actions):
            _predict(phi, trans[a], pred)
            _obs_probs(pred, obs, probs[a])
            for o in range(n_obs):
                z = probs[a, o]
                if z <= MIN_EVIDENCE_C:
                    continue
                for s in range(n_states):
                    post[s] = pred[s] * obs[s, o] / z
                _project(post, class_index, offsets, margs, children[a, o])
    return probs_arr, children_arr


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = z + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _child_seed(uint64_t seed, Py_ssize_t a, Py_ssize_t o) noexcept nogil:
    return _mix64(seed ^ _mix64(((<uint64_t>a & 0xFFFFFFFFULL) << 32) | (<uint64_t>o & 0xFFFFFFFFULL)))


def child_seed(uint64_t seed, Py_ssize_t a, Py_ssize_t o):
    return _child_seed(seed, a, o)


cdef class _SparseSearch:
    cdef const double[:, :, ::1] trans
    cdef const double[:, ::1] obs
    cdef const double[::1] rewards
    cdef const Py_ssize_t[:, ::1] class_index
    cdef const Py_ssize_t[::1] class_sizes
    cdef object offsets
    cdef Py_ssize_t total_marg
    cdef double gamma
    cdef long long samples
    cdef object stream
    cdef public Py_ssize_t nodes

    def __init__(self, trans, obs, rewards, class_index, class_sizes, double gamma, long long samples, stream):
        self.trans = trans
        self.obs = obs
        self.rewards = rewards
        self.class_index = class_index
        self.class_sizes = class_sizes
        self.offsets, self.total_marg = _offsets(class_sizes)
        self.gamma = gamma
        self.samples = samples
        self.stream = stream
        self.nodes = 0

    cdef object _counts(self, double[:, ::1] probs, uint64_t seed):
        cdef Py_ssize_t n_actions = probs.shape[0], n_obs = probs.shape[1], a, o
        cdef double s
        g = self.stream.reset(seed)
        counts = np.empty((n_actions, n_obs), dtype=np.int64)
        p_arr = np.empty(n_obs)
        cdef double[::1] p = p_arr
        for a in range(n_actions):
            s = 0.0
            for o in range(n_obs):
                p[o] = probs[a, o] if probs[a, o] > MIN_EVIDENCE_C else 0.0
                s += p[o]
            for o in range(n_obs):
                p[o] = p[o] / s
            counts[a] = g.multinomial(self.samples, p_arr)
        return counts

    cdef object run(self, const double[::1] phi, int depth, uint64_t seed, Py_ssize_t only_action):
        cdef Py_ssize_t n_actions = self.trans.shape[0], n_states = self.obs.shape[0], n_obs = self.obs.shape[1]
        cdef Py_ssize_t a, o, s
        cdef double r = 0.0, z, acc, best
        cdef long long c
        self.nodes += 1
        for s in range(n_states):
            r += phi[s] * self.rewards[s]
        q_arr = np.empty(n_actions)
        cdef double[::1] q = q_arr
        if depth == 0:
            for a in range(n_actions):
                q[a] = r
            return q_arr
        probs_arr = np.zeros((n_actions, n_obs))
        children_arr = np.zeros((n_actions, n_obs, n_states))
        pred_arr = np.empty(n_states)
        post_arr = np.empty(n_states)
        margs_arr = np.empty(self.total_marg)
        cdef double[:, ::1] probs = probs_arr
        cdef double[:, :, ::1] children = children_arr
        cdef double[::1] pred = pred_arr
        cdef double[::1] post = post_arr
        cdef double[::1] margs = margs_arr
        cdef const Py_ssize_t[::1] offsets = self.offsets
        for a in range(n_actions):
            _predict(phi, self.trans[a], pred)
            _obs_probs(pred, self.obs, probs[a])
            for o in range(n_obs):
                z = probs[a, o]
                if z <= MIN_EVIDENCE_C:
                    continue
                for s in range(n_states):
                    post[s] = pred[s] * self.obs[s, o] / z
                _project(post, self.class_index, offsets, margs, children[a, o])
        counts_arr = self._counts(probs, seed)
        cdef const long long[:, ::1] counts = counts_arr
        cdef double[::1] cq
        for a in range(n_actions):
            if only_action >= 0 and a != only_action:
                q[a] = np.nan
                continue
            acc = 0.0
            for o in range(n_obs):
                c = counts[a, o]
                if c == 0:
                    continue
                cq = self.run(children[a, o], depth - 1, _child_seed(seed, a, o), -1)
                best = cq[0]
                for s in range(1, n_actions):
                    if cq[s] > best:
                        best = cq[s]
                acc += <double>c * best
            q[a] = r + self.gamma * acc / <double>self.samples
        return q_arr


def sparse_search(phi, int depth, uint64_t seed, trans, obs, rewards, class_index, class_sizes, double gamma,
                  long long samples, stream, Py_ssize_t only_action=-1):
    search = _SparseSearch(trans, obs, rewards, class_index, class_sizes, gamma, samples, stream)
    q = search.run(phi, depth, seed, only_action)
    return q, search.nodes
