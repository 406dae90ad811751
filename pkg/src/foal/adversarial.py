"""Token-level domain-adversarial baseline (gradient reversal + domain discriminator).

Training alternates ``alpha`` generator steps (task loss plus reversed
domain loss through the encoder) with one discriminator-only step.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.autograd import Function

from .spans import ACTIVATIONS


class _GradientReversal(Function):
    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad):
        return -ctx.scale * grad, None


def gradient_reversal(x: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    if scale < 0:
        raise ValueError("gradient reversal scale must be nonnegative")
    return _GradientReversal.apply(x, scale)


class DomainDiscriminator(nn.Module):
    """h -> logits over {source, target}."""

    def __init__(self, in_dim: int, hidden: int = 100, activation: str = "gelu"):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, hidden), ACTIVATIONS[activation](), nn.Linear(hidden, 2))

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return self.net(h)


SOURCE, TARGET = 0, 1


def domain_loss(source_tokens: torch.Tensor, target_tokens: torch.Tensor, discriminator: nn.Module) -> torch.Tensor:
    """Mean NLL of the true domain over every token vector of both domains."""
    if source_tokens.shape[0] == 0 or target_tokens.shape[0] == 0:
        raise ValueError("domain loss needs tokens from both domains")
    h = torch.cat([source_tokens, target_tokens])
    labels = torch.cat([
        torch.full((source_tokens.shape[0],), SOURCE, dtype=torch.long),
        torch.full((target_tokens.shape[0],), TARGET, dtype=torch.long),
    ])
    log_probs = torch.log_softmax(discriminator(h), dim=-1)
    return -log_probs.gather(1, labels.view(-1, 1)).mean()


@dataclass
class AdversarialSchedule:
    """Cycle of ``alpha`` generator steps followed by one discriminator step."""

    alpha: int
    position: int = 0
    generator_steps: int = 0
    discriminator_steps: int = 0

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ValueError("alpha must be an integer >= 1")

    def next_phase(self) -> str:
        phase = "generator" if self.position < self.alpha else "discriminator"
        self.position = (self.position + 1) % (self.alpha + 1)
        if phase == "generator":
            self.generator_steps += 1
        else:
            self.discriminator_steps += 1
        return phase

    def state_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "position": self.position,
            "generator_steps": self.generator_steps,
            "discriminator_steps": self.discriminator_steps,
        }


@dataclass
class AdversarialState:
    discriminator: DomainDiscriminator
    optimizer: torch.optim.Optimizer
    schedule: AdversarialSchedule
    adv_weight: float = 1.0


def at_train_step(source_batch, target_batch, state, adv: AdversarialState) -> dict:
    """One scheduled adversarial step. ``state`` is a trainer ``TrainState``.

    Generator steps update encoder and classifiers on
    ``l_aste + adv_weight * l_domain`` with the domain loss reversed at the
    encoder output; discriminator steps update only the discriminator on
    detached token vectors.
    """
    from .trainer import source_outputs_and_loss, target_outputs, check_finite

    model = state.model
    phase = adv.schedule.next_phase()
    if phase == "generator":
        l_aste, src_outs = source_outputs_and_loss(model, source_batch)
        tgt_outs = target_outputs(model, target_batch)
        h_src = torch.cat([o.hidden for o in src_outs])
        h_tgt = torch.cat([o.hidden for o in tgt_outs])
        l_dom = domain_loss(gradient_reversal(h_src), gradient_reversal(h_tgt), adv.discriminator)
        total = l_aste + adv.adv_weight * l_dom
        check_finite(total, source_batch, target_batch, state)
        state.optimizer.zero_grad()
        adv.optimizer.zero_grad()
        total.backward()
        state.optimizer.step()
        adv.optimizer.zero_grad()
        metrics = {"l_aste": l_aste.item(), "l_domain": l_dom.item(), "l_total": total.item()}
    else:
        with torch.no_grad():
            h_src = torch.cat([model.encoder(s.tokens) for s in source_batch])
            h_tgt = torch.cat([model.encoder(s.tokens) for s in target_batch])
        l_dom = domain_loss(h_src, h_tgt, adv.discriminator)
        check_finite(l_dom, source_batch, target_batch, state)
        adv.optimizer.zero_grad()
        l_dom.backward()
        adv.optimizer.step()
        metrics = {"l_domain": l_dom.item()}
    state.step += 1
    metrics["phase"] = phase
    return metrics
