"""Travel intention discovery with a neural topic model.

Out-of-town POIs play the role of words, users' out-of-town check-ins the
role of documents, and topics are generic travel intentions. The posterior
over the latent Gaussian is amortized by an encoder over the user's
normalized bag of visited POIs; the topic mixture is the softmax of an
affine map of a reparameterized sample.
"""
from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .errors import ContractError

PREFIX = "intention."
LOG_FLOOR = 1e-10
LOG_VAR_RANGE = (-8.0, 8.0)


@dataclass
class NtmWeights:
    T: nk.Tensor
    E: nk.Tensor
    enc_W: nk.Tensor
    enc_b: nk.Tensor
    mu_W: nk.Tensor
    mu_b: nk.Tensor
    sigma_W: nk.Tensor
    sigma_b: nk.Tensor
    theta_W: nk.Tensor
    theta_b: nk.Tensor

    @classmethod
    def from_store(cls, params, E=None):
        get = lambda n: params[PREFIX + n]  # noqa: E731
        return cls(get("T"), E if E is not None else get("E"), get("enc_W"), get("enc_b"),
                   get("mu_W"), get("mu_b"), get("sigma_W"), get("sigma_b"),
                   get("theta_W"), get("theta_b"))


@dataclass
class PosteriorParams:
    mu: nk.Tensor
    log_var: nk.Tensor

    @property
    def var(self):
        return np.exp(self.log_var.value)


def init_params(params, n_out, d, K, hidden=256, share_E=False):
    s = 1.0 / np.sqrt(d)
    params.uniform(PREFIX + "T", (K, d), s)
    if not share_E:
        params.uniform(PREFIX + "E", (n_out, d), s)
    params.uniform(PREFIX + "enc_W", (hidden, n_out), s)
    params.zeros(PREFIX + "enc_b", (hidden,))
    # latent size equals K
    params.uniform(PREFIX + "mu_W", (K, hidden), s)
    params.zeros(PREFIX + "mu_b", (K,))
    params.uniform(PREFIX + "sigma_W", (K, hidden), s)
    params.zeros(PREFIX + "sigma_b", (K,))
    params.uniform(PREFIX + "theta_W", (K, K), s)
    params.zeros(PREFIX + "theta_b", (K,))
    params.uniform(PREFIX + "W_t", (d, d), s)


def _linear(x, W, b):
    return nk.matmul(x, nk.transpose(W)) + b


def intention_poi_distribution(E, T):
    """Phi[i] = softmax(E t_i), shape [K, D2]."""
    return nk.softmax(nk.matmul(T, nk.transpose(E)), axis=-1)


def normalize_bow(bow):
    bow = np.asarray(bow, dtype=np.float64)
    total = bow.sum(axis=-1, keepdims=True)
    return np.divide(bow, total, out=np.zeros_like(bow), where=total > 0)


def encode_posterior(bow, w):
    """mu and clamped log-variance of q(z | bow). ``bow`` may be [D2] or [B, D2]."""
    h = nk.relu(_linear(nk.as_tensor(normalize_bow(bow)), w.enc_W, w.enc_b))
    mu = _linear(h, w.mu_W, w.mu_b)
    log_var = nk.clip(_linear(h, w.sigma_W, w.sigma_b), *LOG_VAR_RANGE)
    return PosteriorParams(mu, log_var)


def sample_theta(post, theta_W, theta_b, epsilon):
    """Gaussian-softmax mixture: z = mu + sigma * eps, Theta = softmax(F(z))."""
    sigma = nk.exp(nk.mul(post.log_var, 0.5))
    z = post.mu + sigma * np.asarray(epsilon, dtype=np.float64)
    return nk.softmax(_linear(z, theta_W, theta_b), axis=-1)


def kl_standard_normal(post):
    """Closed-form KL(N(mu, sigma^2) || N(0, I)) summed over latent dims (and batch)."""
    lv = post.log_var
    return nk.mul(nk.sum(nk.exp(lv) + nk.square(post.mu) - 1.0 - lv), 0.5)


def ntm_loss(bow, Phi, Theta, post):
    """Negative ELBO with a single reparameterized sample, summed over users."""
    Phi, Theta = nk.as_tensor(Phi), nk.as_tensor(Theta)
    if np.any(Phi.value < 0) or np.any(Theta.value < 0):
        raise ContractError("Phi and Theta must be nonnegative")
    word_prob = nk.matmul(Theta, Phi)                 # [B, D2]
    recon = nk.sum(nk.mul(nk.log(word_prob + LOG_FLOOR), np.asarray(bow, dtype=np.float64)))
    return kl_standard_normal(post) - recon


def user_intention(T, u_h, W_t):
    """beta = softmax_i(t_i . W_t u_h); returns (sum_i beta_i t_i, beta)."""
    T = nk.as_tensor(T)
    proj = nk.matmul(u_h, nk.transpose(W_t))          # rows are (W_t u_h)^T
    beta = nk.softmax(nk.matmul(proj, nk.transpose(T)), axis=-1)
    return nk.matmul(beta, T), beta
