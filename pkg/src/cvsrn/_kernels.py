"""JIT kernels: stack-program interpreter and the SSA inner loop."""

import math

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old and numba warns on every process; OpenMP is fine
if config.THREADING_LAYER == "default":
    config.THREADING_LAYER = "omp"

# opcodes, kept in sync with rates.py
_PUSH_CONST = 0
_PUSH_SPECIES = 1
_PUSH_PARAM = 2
_ADD = 3
_SUB = 4
_MUL = 5
_DIV = 6
_POW_INT = 7

LAMBDA_ZERO_TOL = 1e-12

# trajectory status codes
OK = 0
EVENT_CAP = 1
BAD_PROPENSITY = 2
DIV_ZERO = 3
NEGATIVE_STATE = 4
RECORD_FULL = 5


@njit(cache=True)
def eval_all(ops, fargs, iargs, ends, x, params, stack, out):
    """Run the concatenated programs; program ``j`` ends at ``ends[j]``.

    Writes one value per program to ``out``. Returns False on division by
    zero. A single flat loop is several times faster than one call per
    program.
    """
    sp = 0
    j = 0
    for pc in range(ops.shape[0]):
        op = ops[pc]
        if op == _PUSH_PARAM:
            stack[sp] = params[iargs[pc]]
            sp += 1
        elif op == _PUSH_SPECIES:
            stack[sp] = float(x[iargs[pc]])
            sp += 1
        elif op == _MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == _PUSH_CONST:
            stack[sp] = fargs[pc]
            sp += 1
        elif op == _SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == _ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == _DIV:
            sp -= 1
            if stack[sp] == 0.0:
                return False
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        else:  # _POW_INT
            k = iargs[pc]
            base = stack[sp - 1]
            r = 1.0
            for _ in range(abs(k)):
                r *= base
            if k < 0:
                if r == 0.0:
                    return False
                r = 1.0 / r
            stack[sp - 1] = r
        while j < ends.shape[0] and pc + 1 == ends[j]:
            out[j] = stack[0]
            sp = 0
            j += 1
    return True


@njit(cache=True)
def eval_program(ops, fargs, iargs, x, params, stack):
    out = np.empty(1)
    ends = np.array([ops.shape[0]], dtype=np.int64)
    ok = eval_all(ops, fargs, iargs, ends, x, params, stack, out)
    return out[0], ok


@njit(cache=True)
def ssa_run(
    x0, change, ops, fargs, iargs, ends, params, horizon, max_events, stack_size,
    lams, key_lam, key_exps, seed, x_out, acc, rec_times, rec_states, record,
):
    """Simulate one trajectory on [0, horizon].

    Accumulates ``acc[k] += int exp(lams[key_lam[k]] t) x^key_exps[k] dt`` over
    each holding segment before the jump is applied. When ``record`` is set,
    jump times and states are written to ``rec_times``/``rec_states``.
    Returns ``(status, n_events, n_recorded)``.
    """
    np.random.seed(seed)
    n_species = x0.shape[0]
    n_reactions = change.shape[0]
    n_lams = lams.shape[0]
    n_keys = key_lam.shape[0]
    x = x0.copy()
    props = np.empty(n_reactions)
    stack = np.empty(stack_size)
    e_now = np.ones(n_lams)
    inc = np.empty(n_lams)
    # keys sharing a monomial (different lambdas) reuse one evaluation per segment
    key_mono = np.empty(n_keys, dtype=np.int64)
    mono_rows = np.empty(n_keys, dtype=np.int64)
    n_mono = 0
    for k in range(n_keys):
        acc[k] = 0.0
        key_mono[k] = -1
        for q in range(n_mono):
            same = True
            for i in range(n_species):
                if key_exps[mono_rows[q], i] != key_exps[k, i]:
                    same = False
                    break
            if same:
                key_mono[k] = q
                break
        if key_mono[k] < 0:
            mono_rows[n_mono] = k
            key_mono[k] = n_mono
            n_mono += 1
    mono = np.empty(max(n_mono, 1))
    acc_loc = np.zeros(max(n_keys, 1))
    t = 0.0
    events = 0
    n_rec = 0
    if record:
        rec_times[0] = 0.0
        for i in range(n_species):
            rec_states[0, i] = x[i]
        n_rec = 1
    while True:
        if not eval_all(ops, fargs, iargs, ends, x, params, stack, props):
            return DIV_ZERO, events, n_rec
        a0 = 0.0
        for j in range(n_reactions):
            val = props[j]
            if not (val >= 0.0) or math.isinf(val):
                return BAD_PROPENSITY, events, n_rec
            a0 += val
        fire = False
        t_next = horizon
        if a0 > 0.0:
            t_cand = t + np.random.exponential(1.0 / a0)
            if t_cand < horizon:
                t_next = t_cand
                fire = True
        if n_keys > 0:
            dt = t_next - t
            for l in range(n_lams):
                lam = lams[l]
                if abs(lam) < LAMBDA_ZERO_TOL:
                    inc[l] = dt
                else:
                    em = math.expm1(lam * dt)
                    inc[l] = e_now[l] * em / lam
                    e_now[l] += e_now[l] * em
            for q in range(n_mono):
                v = 1.0
                for i in range(n_species):
                    e = key_exps[mono_rows[q], i]
                    if e > 0:
                        xi = float(x[i])
                        for _ in range(e):
                            v *= xi
                mono[q] = v
            for k in range(n_keys):
                acc_loc[k] += inc[key_lam[k]] * mono[key_mono[k]]
        if not fire:
            break
        u = np.random.random() * a0
        j = 0
        cum = props[0]
        while u >= cum and j < n_reactions - 1:
            j += 1
            cum += props[j]
        while props[j] == 0.0:
            j -= 1
        for i in range(n_species):
            x[i] += change[j, i]
            if x[i] < 0:
                return NEGATIVE_STATE, events, n_rec
        t = t_next
        events += 1
        if record:
            if n_rec >= rec_times.shape[0] - 1:
                return RECORD_FULL, events, n_rec
            rec_times[n_rec] = t
            for i in range(n_species):
                rec_states[n_rec, i] = x[i]
            n_rec += 1
        if events >= max_events:
            return EVENT_CAP, events, n_rec
    for i in range(n_species):
        x_out[i] = x[i]
    for k in range(n_keys):
        acc[k] = acc_loc[k]
    if record:
        rec_times[n_rec] = horizon
    return OK, events, n_rec


@njit(cache=True, parallel=True)
def ssa_batch(
    x0, change, ops, fargs, iargs, ends, params, horizon, max_events, stack_size,
    lams, key_lam, key_exps, seeds, x_out, acc, status, events,
):
    n = seeds.shape[0]
    dummy_t = np.empty(1)
    dummy_s = np.empty((1, x0.shape[0]), dtype=np.int64)
    for i in prange(n):
        st, ev, _ = ssa_run(
            x0, change, ops, fargs, iargs, ends, params, horizon, max_events, stack_size,
            lams, key_lam, key_exps, seeds[i], x_out[i], acc[i], dummy_t, dummy_s, False,
        )
        status[i] = st
        events[i] = ev
