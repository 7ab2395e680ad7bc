"""Built-in test models and HuggingFace-config model construction.

Everything here builds models locally (random weights); nothing is
downloaded, so exports work offline. Each entry returns the module plus a
builder mapping (batch_size, seq_len) to forward-call args.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class TinyEncoder(nn.Module):
    """One-layer transformer encoder written against raw torch ops, so the
    export exercises both primitive modules and the patched functional
    matmul/softmax calls."""

    def __init__(self, vocab=100, hidden=32, heads=2, ffn=64, max_len=64):
        super().__init__()
        self.embeddings = nn.Embedding(vocab, hidden)
        self.embed_norm = nn.LayerNorm(hidden)
        self.attention = TinySelfAttention(hidden, heads)
        self.attn_norm = nn.LayerNorm(hidden)
        self.ffn = nn.Sequential(nn.Linear(hidden, ffn), nn.GELU(), nn.Linear(ffn, hidden))
        self.out_norm = nn.LayerNorm(hidden)
        self.pooler = nn.Linear(hidden, hidden)
        self.pooler_act = nn.Tanh()

    def forward(self, input_ids):
        x = self.embed_norm(self.embeddings(input_ids))
        x = self.attn_norm(x + self.attention(x))
        x = self.out_norm(x + self.ffn(x))
        return self.pooler_act(self.pooler(x[:, 0]))


class TinySelfAttention(nn.Module):
    def __init__(self, hidden, heads):
        super().__init__()
        self.heads = heads
        self.head_dim = hidden // heads
        self.query = nn.Linear(hidden, hidden)
        self.key = nn.Linear(hidden, hidden)
        self.value = nn.Linear(hidden, hidden)
        self.out = nn.Linear(hidden, hidden)

    def forward(self, x):
        b, s, h = x.shape
        shape = (b, s, self.heads, self.head_dim)
        q = self.query(x).view(shape).transpose(1, 2)
        k = self.key(x).view(shape).transpose(1, 2)
        v = self.value(x).view(shape).transpose(1, 2)
        scores = torch.matmul(q, k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        probs = torch.softmax(scores, dim=-1)
        ctx = torch.matmul(probs, v).transpose(1, 2).reshape(b, s, h)
        return self.out(ctx)


class TinyRecurrent(nn.Module):
    """Embedding + LSTM + classifier head."""

    def __init__(self, vocab=100, hidden=32):
        super().__init__()
        self.embeddings = nn.Embedding(vocab, hidden)
        self.encoder = nn.LSTM(hidden, hidden, batch_first=True)
        self.head = nn.Linear(hidden, 4)
        self.act = nn.Sigmoid()

    def forward(self, input_ids):
        x = self.embeddings(input_ids)
        out, _ = self.encoder(x)
        return self.act(self.head(out[:, -1]))


def _token_input(vocab):
    def build(batch_size, seq_len, device):
        gen = torch.Generator().manual_seed(0)
        ids = torch.randint(0, vocab, (batch_size, seq_len), generator=gen)
        return (ids.to(device),)
    return build


def _hf_config_model(preset: str):
    try:
        import transformers
    except ImportError as e:
        raise ValueError(
            f"model preset '{preset}' needs the 'transformers' package (pip extra [hf])"
        ) from e
    if preset == "bert":
        config = transformers.BertConfig(
            vocab_size=128, hidden_size=32, num_hidden_layers=1, num_attention_heads=2,
            intermediate_size=64, max_position_embeddings=64)
        model = transformers.BertModel(config)
    elif preset == "gpt2":
        config = transformers.GPT2Config(
            vocab_size=128, n_positions=64, n_embd=32, n_layer=1, n_head=2)
        model = transformers.GPT2Model(config)
    else:
        raise ValueError(f"unknown hf-config preset '{preset}' (expected bert or gpt2)")
    return model, _token_input(128)


def build_model(identifier: str):
    """Resolve a model identifier to (module, input_builder).

    Identifiers: ``tiny-encoder``, ``tiny-lstm``, or ``hf-config:<bert|gpt2>``
    (local random-weight construction from a config, no downloads).
    """
    if identifier == "tiny-encoder":
        return TinyEncoder(), _token_input(100)
    if identifier == "tiny-lstm":
        return TinyRecurrent(), _token_input(100)
    if identifier.startswith("hf-config:"):
        return _hf_config_model(identifier.split(":", 1)[1])
    raise ValueError(
        f"unsupported model '{identifier}' "
        f"(expected tiny-encoder, tiny-lstm, or hf-config:<bert|gpt2>)")
