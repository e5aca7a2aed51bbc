"""A small encoder-decoder for both learned stages (well under 1M params)."""

from __future__ import annotations

import torch
import torch.nn as nn


class ConvBlock(nn.Module):
    def __init__(self, cin: int, cout: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True),
            nn.Dropout2d(dropout),
            nn.Conv2d(cout, cout, 3, padding=1), nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class TinyUNet(nn.Module):
    """Four-level U-shaped net: 1-channel raster in, per-pixel logit out.

    Four poolings give a receptive field wide enough to bridge the largest
    fragment gaps at the reduced reconnection working size.
    """

    def __init__(self, dropout: float = 0.2, base: int = 8):
        super().__init__()
        c1, c2, c3, c4, c5 = (base * 2 ** i for i in range(5))
        self.enc1 = ConvBlock(1, c1, dropout)
        self.enc2 = ConvBlock(c1, c2, dropout)
        self.enc3 = ConvBlock(c2, c3, dropout)
        self.enc4 = ConvBlock(c3, c4, dropout)
        self.bottleneck = ConvBlock(c4, c5, dropout)
        self.pool = nn.MaxPool2d(2)
        self.up4 = nn.ConvTranspose2d(c5, c4, 2, stride=2)
        self.dec4 = ConvBlock(c4 * 2, c4, dropout)
        self.up3 = nn.ConvTranspose2d(c4, c3, 2, stride=2)
        self.dec3 = ConvBlock(c3 * 2, c3, dropout)
        self.up2 = nn.ConvTranspose2d(c3, c2, 2, stride=2)
        self.dec2 = ConvBlock(c2 * 2, c2, dropout)
        self.up1 = nn.ConvTranspose2d(c2, c1, 2, stride=2)
        self.dec1 = ConvBlock(c1 * 2, c1, dropout)
        self.head = nn.Conv2d(c1, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        e4 = self.enc4(self.pool(e3))
        b = self.bottleneck(self.pool(e4))
        d4 = self.dec4(torch.cat([self.up4(b), e4], dim=1))
        d3 = self.dec3(torch.cat([self.up3(d4), e3], dim=1))
        d2 = self.dec2(torch.cat([self.up2(d3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.head(d1)

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())
