"""Sources of the action a_t consumed by each generator rollout step."""
from typing import TYPE_CHECKING, Optional

import numpy as np

from acvg.errors import ProviderError
from acvg.tensor import Tensor
from acvg.tensor import functional as F

if TYPE_CHECKING:
    from acvg.models.actor import Actor


class ActionProvider:
    """Hands out a_t for t = 0, 1, ...; `observe` receives chi_{t+1}.

    With `noise_sigma` > 0 every action is perturbed with independent
    Gaussian noise and clamped to [-1, 1]. Every action handed out is kept in
    `history`.
    """

    def __init__(self, noise_sigma: float = 0.0, rng: Optional[np.random.Generator] = None):
        if noise_sigma < 0:
            raise ValueError(f"noise sigma must be non-negative, got {noise_sigma}")
        if noise_sigma > 0 and rng is None:
            raise ValueError("a noisy provider needs a random generator")
        self.noise_sigma = noise_sigma
        self.rng = rng
        self.history: list[Tensor] = []

    def _action(self, t: int) -> Tensor:
        raise NotImplementedError

    def _perturb(self, action: Tensor) -> Tensor:
        if self.noise_sigma == 0:
            return action
        noise = self.rng.normal(0.0, self.noise_sigma, size=action.shape)
        return F.clamp(action + Tensor(noise), -1.0, 1.0)

    def action(self, t: int) -> Tensor:
        action = self._perturb(self._action(t))
        self.history.append(action)
        return action

    def observe(self, t: int, chi: Tensor) -> None:
        pass


class GroundTruthActions(ActionProvider):
    """Replays a_0 followed by the recorded future actions a_1, a_2, ..."""

    def __init__(self, past_actions, future_actions, noise_sigma: float = 0.0, rng=None):
        super().__init__(noise_sigma, rng)
        self.a0 = Tensor(np.asarray(past_actions)[:, -1])
        self.future = np.asarray(future_actions)

    def _action(self, t: int) -> Tensor:
        if t == 0:
            return self.a0
        if t - 1 >= self.future.shape[1]:
            raise ProviderError(f"ground-truth actions exhausted at step {t} (horizon {self.future.shape[1]})")
        return Tensor(self.future[:, t - 1])


class FixedActions(ActionProvider):
    """Holds the last observed action a_0 for the whole horizon."""

    def __init__(self, past_actions, noise_sigma: float = 0.0, rng=None):
        super().__init__(noise_sigma, rng)
        self.a0 = Tensor(np.asarray(past_actions)[:, -1])

    def _action(self, t: int) -> Tensor:
        return self.a0


class ActorActions(ActionProvider):
    """Delayed actor: a_0 first, then the action the actor derived from the
    previous step's chi. The (possibly noisy) action handed to the generator
    is also the one fed to the actor's recurrence."""

    def __init__(self, actor: "Actor", past_actions, noise_sigma: float = 0.0, rng=None):
        super().__init__(noise_sigma, rng)
        past_actions = past_actions if isinstance(past_actions, Tensor) else Tensor(past_actions)
        self.actor = actor
        self.state = actor.warmup(past_actions[:, :-1])
        self.a0 = past_actions[:, -1]
        self.predictions: list[Tensor] = []

    def _action(self, t: int) -> Tensor:
        if t == 0:
            return self.a0
        if t != len(self.predictions):
            raise ProviderError(f"actor has produced {len(self.predictions)} actions, step {t} was requested")
        return self.predictions[t - 1]

    def observe(self, t: int, chi: Tensor) -> None:
        alpha = self.actor.rec_step(self.history[t], self.state)
        self.predictions.append(self.actor.decode(chi, alpha))
