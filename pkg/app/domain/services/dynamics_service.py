import logging
from typing import List, Sequence, Tuple

import numpy as np

from app.domain.entities.switched_system import GlobalState, NetworkSpec, SubsystemSpec
from app.domain.errors import DwellViolationError, InvalidInputError

logger = logging.getLogger(__name__)


class DynamicsService:
    """Exact evaluation of the concrete switched dynamics and the dwell-time automaton"""

    def step_concrete(self, spec: SubsystemSpec, x, p: int, w, noise) -> np.ndarray:
        """x⁺ = A_p x + E_p φ_p(F_p x) + B_p + D_p w + R_p·noise.

        Leading axes of x, w and noise broadcast, so whole batches step at once.
        """
        if not 0 <= p < spec.mode_count:
            raise InvalidInputError(f"mode {p} out of range for '{spec.name}'")
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        noise = np.asarray(noise, dtype=float)
        if x.shape[-1:] != (spec.n,):
            raise InvalidInputError(f"state must have {spec.n} entries, got {x.shape}")
        if w.shape[-1:] != (spec.internal_dim,):
            raise InvalidInputError(
                f"internal input must have {spec.internal_dim} entries, got {w.shape}"
            )
        if noise.shape[-1:] != (spec.n,):
            raise InvalidInputError(f"noise must have {spec.n} entries, got {noise.shape}")
        mode = spec.modes[p]
        out = x @ mode.A.T + mode.B + w @ mode.D.T + noise @ mode.R.T
        if mode.has_nonlinearity():
            out = out + mode.phi(x @ mode.F.T) @ mode.E.T
        return out

    def dwell_step(self, state: GlobalState, requested_mode: int, dwell_time: int) -> Tuple[int, int]:
        """Next (mode, counter) of the dwell-time automaton"""
        if dwell_time < 1:
            raise InvalidInputError("dwell time must be at least 1")
        if not 0 <= state.l <= dwell_time - 1:
            raise InvalidInputError(f"counter {state.l} outside 0..{dwell_time - 1}")
        if state.l < dwell_time - 1:
            if requested_mode != state.p:
                raise DwellViolationError(
                    f"switch from mode {state.p} to {requested_mode} requested after "
                    f"{state.l + 1} of {dwell_time} steps"
                )
            return state.p, state.l + 1
        if requested_mode == state.p:
            return state.p, dwell_time - 1
        return requested_mode, 0

    def interconnect(self, net: NetworkSpec, x_all: Sequence, clamp: bool = True) -> List[np.ndarray]:
        """Assemble every internal input w_i from the neighbors' outputs.

        Unconnected blocks stay zero. With `clamp`, inputs outside the declared
        internal-input box are clamped into it and a warning is logged.
        """
        if len(x_all) != net.size:
            raise InvalidInputError(f"expected {net.size} subsystem states, got {len(x_all)}")
        states = []
        for spec, x in zip(net.subsystems, x_all):
            x = np.asarray(x, dtype=float)
            if x.shape[-1:] != (spec.n,):
                raise InvalidInputError(f"state of '{spec.name}' must have {spec.n} entries")
            states.append(x)
        batch = np.broadcast_shapes(*(x.shape[:-1] for x in states)) if states else ()
        inputs = [np.zeros(batch + (spec.internal_dim,)) for spec in net.subsystems]
        for conn in net.connections:
            source = net.subsystems[conn.source]
            routed = states[conn.source] @ (conn.selection @ source.C).T
            inputs[conn.target][..., conn.offset : conn.offset + conn.width] = routed
        if clamp:
            for index, spec in enumerate(net.subsystems):
                clamped = spec.input_box.clamp(inputs[index])
                if not np.array_equal(clamped, inputs[index]):
                    logger.warning(
                        "internal input of '%s' left its box and was clamped", spec.name
                    )
                    inputs[index] = clamped
        return inputs

    def check_signal(self, signal: Sequence[int], dwell_time: int) -> None:
        """Switching instants must be at least dwell_time apart, the first one included"""
        last_switch = 0
        for k in range(1, len(signal)):
            if signal[k] != signal[k - 1]:
                if k - last_switch < dwell_time:
                    raise DwellViolationError(
                        f"switch at step {k} only {k - last_switch} steps after the previous one"
                    )
                last_switch = k

    def simulate_switched(self, spec: SubsystemSpec, x0, signal: Sequence[int], w_seq, noise_seq) -> np.ndarray:
        """Raw recursion x(k+1) = f_{signal(k)}(x(k), w(k), ς(k)); returns states 0..T"""
        self.check_signal(signal, spec.dwell_time)
        horizon = len(signal)
        states = np.empty((horizon + 1, spec.n))
        states[0] = np.asarray(x0, dtype=float)
        for k in range(horizon):
            states[k + 1] = self.step_concrete(spec, states[k], signal[k], w_seq[k], noise_seq[k])
        return states

    def simulate_global(self, spec: SubsystemSpec, x0, p0: int, requests: Sequence[int], w_seq, noise_seq):
        """Run the global MDP: x' uses the current mode, the request sets the next one.

        Returns (states, modes, counters), each of length T+1.
        """
        state = GlobalState.initial(x0, p0)
        state.validate_for(spec)
        horizon = len(requests)
        states = np.empty((horizon + 1, spec.n))
        modes = np.empty(horizon + 1, dtype=int)
        counters = np.empty(horizon + 1, dtype=int)
        states[0], modes[0], counters[0] = state.x, state.p, state.l
        for k in range(horizon):
            x_next = self.step_concrete(spec, state.x, state.p, w_seq[k], noise_seq[k])
            p_next, l_next = self.dwell_step(state, requests[k], spec.dwell_time)
            state = GlobalState(x_next, p_next, l_next)
            states[k + 1], modes[k + 1], counters[k + 1] = x_next, p_next, l_next
        return states, modes, counters
