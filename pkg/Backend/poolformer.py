"""Pooling token mixer stack over a flattened frame sequence, shared by FPS and DPS."""
import torch
from torch import nn


class Pooling1d(nn.Module):
    def __init__(self, pool_size: int = 5):
        super().__init__()
        self.pool = nn.AvgPool1d(pool_size, stride=1, padding=pool_size // 2, count_include_pad=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, L, C); pooling runs along L
        x = x.transpose(1, 2)
        return (self.pool(x) - x).transpose(1, 2)


class ChannelMlp(nn.Module):
    def __init__(self, channels: int, mlp_ratio: int = 2):
        super().__init__()
        self.fc1 = nn.Linear(channels, channels * mlp_ratio)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(channels * mlp_ratio, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class PoolFormerBlock1d(nn.Module):
    def __init__(self, channels: int, pool_size: int = 5, mlp_ratio: int = 2):
        super().__init__()
        self.token_mixer = Pooling1d(pool_size)
        self.mlp = ChannelMlp(channels, mlp_ratio)
        self.norm = nn.LayerNorm(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.token_mixer(x)
        x = x + self.mlp(x)
        return self.norm(x)


class PoolFormerStack(nn.Module):
    """stem -> pooling blocks -> 1-D conv -> per-position head.

    The head starts at zero so the first logits are exactly 0.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        width: int = 64,
        blocks: int = 2,
        pool_size: int = 5,
        mlp_ratio: int = 2,
        conv_kernel: int = 3,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.stem = nn.Linear(in_channels, width)
        self.blocks = nn.ModuleList([PoolFormerBlock1d(width, pool_size, mlp_ratio) for _ in range(blocks)])
        self.conv = nn.Conv1d(width, width, conv_kernel, padding=conv_kernel // 2)
        self.act = nn.GELU()
        self.head = nn.Linear(width, out_channels)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.stem(x)
        for block in self.blocks:
            x = block(x)
        x = self.act(self.conv(x.transpose(1, 2)).transpose(1, 2))
        return self.head(x)
