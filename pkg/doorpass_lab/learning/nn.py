"""Минимальный стек нейросетей на numpy: MLP, GRU-ячейка, гауссова голова, явный backward, Adam.

Параметры хранятся в словаре name -> ndarray (float32 по умолчанию); для
проверок конечными разностями тот же код работает на float64-тени.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import ShapeMismatchError

Params = Dict[str, np.ndarray]

LOG_2PI = math.log(2.0 * math.pi)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def cast_params(params: Params, dtype) -> Params:
    """Копия параметров в другом типе (float64-тень для градиентных проверок)"""
    return {k: np.array(v, dtype=dtype) for k, v in params.items()}


def _check_input(where: str, x: np.ndarray, width: int):
    if x.shape[-1] != width:
        raise ShapeMismatchError(where, (..., width), tuple(x.shape))


def init_linear(rng: np.random.Generator, params: Params, name: str, n_in: int, n_out: int,
                gain: float = 1.0, dtype=np.float32):
    """Равномерная инициализация Глоро с коэффициентом gain, нулевое смещение"""
    limit = gain * math.sqrt(6.0 / (n_in + n_out))
    params[f"{name}.W"] = rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype)
    params[f"{name}.b"] = np.zeros(n_out, dtype=dtype)


def linear_forward(params: Params, name: str, x: np.ndarray) -> np.ndarray:
    w = params[f"{name}.W"]
    _check_input(name, x, w.shape[0])
    return x.astype(w.dtype, copy=False) @ w + params[f"{name}.b"]


def linear_backward(params: Params, name: str, x: np.ndarray, dy: np.ndarray,
                    grads: Params) -> np.ndarray:
    w = params[f"{name}.W"]
    x2 = x.reshape(-1, x.shape[-1]).astype(w.dtype, copy=False)
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[f"{name}.W"] += x2.T @ dy2
    grads[f"{name}.b"] += dy2.sum(axis=0)
    return dy @ w.T


class MLP:
    """Полносвязная сеть с tanh на скрытых слоях; последний слой линейный либо с tanh"""

    def __init__(self, prefix: str, sizes: Sequence[int], activate_last: bool = False):
        if len(sizes) < 2:
            raise ValueError("MLP требует хотя бы вход и выход")
        self.prefix = prefix
        self.sizes = [int(s) for s in sizes]
        self.activate_last = activate_last

    @property
    def names(self) -> List[str]:
        return [f"{self.prefix}.{i}" for i in range(len(self.sizes) - 1)]

    def init(self, rng: np.random.Generator, params: Params, last_gain: float = 1.0,
             dtype=np.float32):
        names = self.names
        for i, name in enumerate(names):
            gain = last_gain if i == len(names) - 1 else 1.0
            init_linear(rng, params, name, self.sizes[i], self.sizes[i + 1], gain, dtype)

    def forward(self, params: Params, x: np.ndarray) -> Tuple[np.ndarray, list]:
        cache = []
        names = self.names
        for i, name in enumerate(names):
            z = linear_forward(params, name, x)
            active = i < len(names) - 1 or self.activate_last
            y = np.tanh(z) if active else z
            cache.append((x, y, active))
            x = y
        return x, cache

    def backward(self, params: Params, cache: list, dy: np.ndarray, grads: Params) -> np.ndarray:
        if not cache:
            raise ValueError("Нет кеша прямого прохода")
        for name, (x, y, active) in zip(reversed(self.names), reversed(cache)):
            dz = dy * (1.0 - y * y) if active else dy
            dy = linear_backward(params, name, x, dz, grads)
        return dy


class GRUCell:
    """z = σ(xWz + hUz + bz), r = σ(xWr + hUr + br), n = tanh(xWn + (r⊙h)Un + bn),
    h' = (1 − z)⊙n + z⊙h"""

    GATES = ("z", "r", "n")

    def __init__(self, prefix: str, n_in: int, n_hidden: int):
        self.prefix = prefix
        self.n_in = int(n_in)
        self.n_hidden = int(n_hidden)

    def init(self, rng: np.random.Generator, params: Params, dtype=np.float32):
        for gate in self.GATES:
            init_linear(rng, params, f"{self.prefix}.W{gate}", self.n_in, self.n_hidden,
                        dtype=dtype)
            limit = 1.0 / math.sqrt(self.n_hidden)
            params[f"{self.prefix}.U{gate}"] = rng.uniform(
                -limit, limit, size=(self.n_hidden, self.n_hidden)).astype(dtype)

    def _p(self, params: Params, kind: str, gate: str) -> np.ndarray:
        if kind == "b":
            return params[f"{self.prefix}.W{gate}.b"]
        if kind == "W":
            return params[f"{self.prefix}.W{gate}.W"]
        return params[f"{self.prefix}.U{gate}"]

    def forward(self, params: Params, x: np.ndarray, h: np.ndarray):
        _check_input(self.prefix, x, self.n_in)
        _check_input(self.prefix, h, self.n_hidden)
        dtype = params[f"{self.prefix}.Uz"].dtype
        x = x.astype(dtype, copy=False)
        h = h.astype(dtype, copy=False)
        z = sigmoid(x @ self._p(params, "W", "z") + h @ self._p(params, "U", "z")
                    + self._p(params, "b", "z"))
        r = sigmoid(x @ self._p(params, "W", "r") + h @ self._p(params, "U", "r")
                    + self._p(params, "b", "r"))
        rh = r * h
        n = np.tanh(x @ self._p(params, "W", "n") + rh @ self._p(params, "U", "n")
                    + self._p(params, "b", "n"))
        h_next = (1.0 - z) * n + z * h
        return h_next, (x, h, z, r, n, rh)

    def backward(self, params: Params, cache, dh_next: np.ndarray, grads: Params):
        """Возвращает (dx, dh_prev)"""
        x, h, z, r, n, rh = cache
        p = self.prefix
        dn = dh_next * (1.0 - z)
        dz = dh_next * (h - n)
        dh = dh_next * z

        dan = dn * (1.0 - n * n)
        grads[f"{p}.Wn.W"] += x.T @ dan
        grads[f"{p}.Wn.b"] += dan.sum(axis=0)
        grads[f"{p}.Un"] += rh.T @ dan
        drh = dan @ self._p(params, "U", "n").T
        dr = drh * h
        dh = dh + drh * r
        dx = dan @ self._p(params, "W", "n").T

        for gate, dgate, value in (("z", dz, z), ("r", dr, r)):
            da = dgate * value * (1.0 - value)
            grads[f"{p}.W{gate}.W"] += x.T @ da
            grads[f"{p}.W{gate}.b"] += da.sum(axis=0)
            grads[f"{p}.U{gate}"] += h.T @ da
            dx = dx + da @ self._p(params, "W", gate).T
            dh = dh + da @ self._p(params, "U", gate).T
        return dx, dh


# --- гауссова политика ---
def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    std = np.exp(log_std)
    z = (actions - mean) / std
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std) + 0.5 * log_std.shape[-1] * (1.0 + LOG_2PI))


@dataclass
class ActorCriticSpec:
    obs_dim: int
    action_dim: int = 9
    hidden_sizes: Tuple[int, ...] = (256, 160, 128)
    init_log_std: float = -0.5

    def to_dict(self) -> Dict:
        return {"kind": "actor_critic", "obs_dim": self.obs_dim, "action_dim": self.action_dim,
                "hidden_sizes": list(self.hidden_sizes), "init_log_std": self.init_log_std}


class ActorCritic:
    """Актор и критик - раздельные MLP [obs, 256, 160, 128] с tanh"""

    def __init__(self, spec: ActorCriticSpec):
        self.spec = spec
        hidden = list(spec.hidden_sizes)
        self.actor = MLP("actor", [spec.obs_dim] + hidden + [spec.action_dim])
        self.critic = MLP("critic", [spec.obs_dim] + hidden + [1])

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        params: Params = {}
        self.actor.init(rng, params, last_gain=0.01, dtype=dtype)
        self.critic.init(rng, params, last_gain=1.0, dtype=dtype)
        params["log_std"] = np.full(self.spec.action_dim, self.spec.init_log_std, dtype=dtype)
        return params

    def act_mean(self, params: Params, obs: np.ndarray) -> np.ndarray:
        return self.actor.forward(params, obs)[0]

    def value(self, params: Params, obs: np.ndarray) -> np.ndarray:
        return self.critic.forward(params, obs)[0][..., 0]

    def forward(self, params: Params, obs: np.ndarray):
        mean, actor_cache = self.actor.forward(params, obs)
        value, critic_cache = self.critic.forward(params, obs)
        return mean, value[..., 0], (actor_cache, critic_cache)

    def backward(self, params: Params, cache, d_mean: np.ndarray, d_value: np.ndarray,
                 d_log_std: np.ndarray) -> Params:
        actor_cache, critic_cache = cache
        grads = zeros_like_params(params)
        self.actor.backward(params, actor_cache, d_mean.astype(params["log_std"].dtype), grads)
        self.critic.backward(params, critic_cache,
                             d_value[..., None].astype(params["log_std"].dtype), grads)
        grads["log_std"] += d_log_std.astype(params["log_std"].dtype)
        return grads


# --- ученик ---
ESTIMATION_FIELDS = (
    ("handle_pos", 3), ("doorway_pos", 3), ("doorway_dir", 2), ("door_joints", 4), ("mass", 1),
    ("resist_torques", 2),
)
ESTIMATION_DIM = sum(s for _, s in ESTIMATION_FIELDS)
DOOR_TYPE_CLASSES = 4


@dataclass
class StudentSpec:
    obs_dim: int
    action_dim: int = 9
    encoder_hidden: int = 256
    gru_hidden: int = 256
    recurrent: bool = True
    estimation_dim: int = ESTIMATION_DIM
    door_type_classes: int = DOOR_TYPE_CLASSES

    @property
    def decoder_dim(self) -> int:
        return self.estimation_dim + self.door_type_classes

    def to_dict(self) -> Dict:
        return {"kind": "student", "obs_dim": self.obs_dim, "action_dim": self.action_dim,
                "encoder_hidden": self.encoder_hidden, "gru_hidden": self.gru_hidden,
                "recurrent": self.recurrent, "estimation_dim": self.estimation_dim,
                "door_type_classes": self.door_type_classes}


@dataclass
class SequenceCache:
    steps: List[tuple] = field(default_factory=list)
    resets: Optional[np.ndarray] = None


class Student:
    """Кодировщик MLP [obs, 256] -> GRU(256) -> голова действий и линейный декодер.

    Без рекуррентности (mlp_student) GRU заменяется полносвязным слоем той же ширины,
    а скрытое состояние не переносится между шагами.
    """

    def __init__(self, spec: StudentSpec):
        self.spec = spec
        self.encoder = MLP("encoder", [spec.obs_dim, spec.encoder_hidden], activate_last=True)
        if spec.recurrent:
            self.core = GRUCell("gru", spec.encoder_hidden, spec.gru_hidden)
        else:
            self.core = MLP("core", [spec.encoder_hidden, spec.gru_hidden], activate_last=True)

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        params: Params = {}
        self.encoder.init(rng, params, dtype=dtype)
        self.core.init(rng, params, dtype=dtype)
        init_linear(rng, params, "action_head", self.spec.gru_hidden, self.spec.action_dim,
                    gain=0.1, dtype=dtype)
        init_linear(rng, params, "decoder", self.spec.gru_hidden, self.spec.decoder_dim,
                    dtype=dtype)
        return params

    def initial_hidden(self, n: int, dtype=np.float32) -> np.ndarray:
        return np.zeros((n, self.spec.gru_hidden), dtype=dtype)

    def step(self, params: Params, obs: np.ndarray, h: np.ndarray):
        """Один шаг: (действие, выход декодера, h', кеш)"""
        enc, enc_cache = self.encoder.forward(params, obs)
        if self.spec.recurrent:
            h_next, core_cache = self.core.forward(params, enc, h)
        else:
            h_next, core_cache = self.core.forward(params, enc)
        action = linear_forward(params, "action_head", h_next)
        decoded = linear_forward(params, "decoder", h_next)
        return action, decoded, h_next, (enc_cache, core_cache, h_next)

    def forward_sequence(self, params: Params, obs_seq: np.ndarray, h0: np.ndarray,
                         resets: Optional[np.ndarray] = None):
        """obs_seq (T, N, D); resets (T, N) - начало эпизода перед шагом t обнуляет h"""
        t_len = obs_seq.shape[0]
        if resets is None:
            resets = np.zeros(obs_seq.shape[:2], dtype=bool)
        keep = (~np.asarray(resets, dtype=bool)).astype(params["decoder.W"].dtype)[..., None]
        cache = SequenceCache(resets=keep)
        actions, decoded = [], []
        h = h0.astype(params["decoder.W"].dtype)
        for t in range(t_len):
            h_in = h * keep[t]
            a, d, h, step_cache = self.step(params, obs_seq[t], h_in)
            actions.append(a)
            decoded.append(d)
            cache.steps.append(step_cache)
        return np.stack(actions), np.stack(decoded), h, cache

    def backward_sequence(self, params: Params, cache: SequenceCache, d_actions: np.ndarray,
                          d_decoded: np.ndarray, window: Optional[int] = None) -> Params:
        """Обратный проход во времени; градиент по h обрывается на границах окон"""
        if not cache.steps:
            raise ValueError("Нет кеша прямого прохода")
        grads = zeros_like_params(params)
        t_len = len(cache.steps)
        window = t_len if window is None else int(window)
        if window < 1:
            raise ValueError("Окно BPTT должно быть не меньше 1")
        dtype = params["decoder.W"].dtype
        dh_carry = np.zeros_like(cache.steps[0][2])
        for t in reversed(range(t_len)):
            enc_cache, core_cache, h_next = cache.steps[t]
            dh = linear_backward(params, "action_head", h_next, d_actions[t].astype(dtype), grads)
            dh = dh + linear_backward(params, "decoder", h_next, d_decoded[t].astype(dtype), grads)
            if self.spec.recurrent:
                dh = dh + dh_carry
                d_enc, dh_prev = self.core.backward(params, core_cache, dh, grads)
                dh_prev = dh_prev * cache.resets[t]
                dh_carry = np.zeros_like(dh_prev) if t % window == 0 else dh_prev
            else:
                d_enc = self.core.backward(params, core_cache, dh, grads)
            self.encoder.backward(params, enc_cache, d_enc, grads)
        return grads


# --- оптимизация ---
class Adam:
    """Adam с поправкой смещения; моменты заводятся при первой встрече параметра"""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Params = {}
        self.v: Params = {}
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1
        for k in sorted(params):
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(self.v[k] * (1.0 / bc2)) + self.epsilon
            params[k] -= (step_size * self.m[k] / denom).astype(params[k].dtype)


def global_norm(grads: Params) -> float:
    total = 0.0
    for k in sorted(grads):
        total += float(np.sum(np.square(grads[k], dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(grads: Params, max_norm: float) -> float:
    """Масштабирует градиенты на месте; возвращает норму до обрезки"""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for k in grads:
            grads[k] *= factor
    return norm


def all_finite(arrays) -> bool:
    return all(bool(np.all(np.isfinite(a))) for a in arrays)


class RunningMeanStd:
    """Нормализатор наблюдений: бегущие среднее/дисперсия, замораживается в чекпоинт"""

    def __init__(self, dim: int, clip: float = 10.0, epsilon: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip
        self.epsilon = epsilon

    def update(self, batch: np.ndarray):
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, self.mean.shape[0])
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean = self.mean + delta * b_count / total
        m2 = self.var * self.count + b_var * b_count + delta ** 2 * self.count * b_count / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        out = (np.asarray(x, dtype=np.float64) - self.mean) / np.sqrt(self.var + self.epsilon)
        return np.clip(out, -self.clip, self.clip)

    def to_dict(self) -> Dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "count": self.count,
                "clip": self.clip}

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunningMeanStd':
        rms = cls(len(data["mean"]), clip=data.get("clip", 10.0))
        rms.mean = np.array(data["mean"], dtype=np.float64)
        rms.var = np.array(data["var"], dtype=np.float64)
        rms.count = float(data["count"])
        return rms
