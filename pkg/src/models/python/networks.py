"""Network building blocks: the conditional VAE encoder, the noise
decoder, the plain CNN denoiser, the super-resolution sub-network, the
discriminator and the frozen feature extractor."""
import torch
import torch.nn as nn
import torch.nn.functional as F

# fixed geometry of the two decoder up-sampling layers
DECONV_KERNEL, DECONV_STRIDE, DECONV_PADDING = 6, 4, 1
LEAKY_SLOPE = .2


class ResidualBlock(nn.Module):
    """conv-relu-conv with an additive skip."""

    def __init__(self, channels):
        super(ResidualBlock, self).__init__()
        self.conv1 = nn.Conv2d(channels, channels, kernel_size=3, stride=1, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, stride=1, padding=1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class ConvEncoder(nn.Module):
    """Stride-2 conv stages, global average pooling and two linear heads
    emitting the mean and log-variance of the latent posterior."""

    def __init__(self, channels, latent_len):
        super(ConvEncoder, self).__init__()
        layers = []
        in_ch = 3
        for out_ch in channels:
            layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1))
            in_ch = out_ch
        self.stages = nn.ModuleList(layers)
        self.mean_head = nn.Linear(in_ch, latent_len)
        self.logvar_head = nn.Linear(in_ch, latent_len)

    def forward(self, x):
        for conv in self.stages:
            x = F.relu(conv(x))
        pooled = x.mean(dim=(2, 3))
        return self.mean_head(pooled), self.logvar_head(pooled)


class NoiseDecoder(nn.Module):
    """Predicts the noise field of an image given a latent vector.

    The noisy image is embedded at 1/16 resolution and concatenated with
    the spatially broadcast latent; two stride-4 transposed convolutions
    restore full resolution, a full-resolution view of the noisy image is
    added, and residual blocks refine before the linear output conv.
    """

    def __init__(self, latent_len, channels, n_blocks):
        super(NoiseDecoder, self).__init__()
        stride = DECONV_STRIDE * DECONV_STRIDE
        self.embed = nn.Conv2d(3, channels, kernel_size=stride, stride=stride)
        self.deconv1 = nn.ConvTranspose2d(channels + latent_len, channels,
                                          kernel_size=DECONV_KERNEL,
                                          stride=DECONV_STRIDE,
                                          padding=DECONV_PADDING)
        self.deconv2 = nn.ConvTranspose2d(channels, channels,
                                          kernel_size=DECONV_KERNEL,
                                          stride=DECONV_STRIDE,
                                          padding=DECONV_PADDING)
        self.skip = nn.Conv2d(3, channels, kernel_size=3, padding=1)
        self.blocks = nn.Sequential(*[ResidualBlock(channels) for _ in range(n_blocks)])
        self.tail = nn.Conv2d(channels, 3, kernel_size=3, padding=1)

    def forward(self, noisy, z):
        emb = F.relu(self.embed(noisy))
        zmap = z[:, :, None, None].expand(-1, -1, emb.shape[2], emb.shape[3])
        x = F.relu(self.deconv1(torch.cat([emb, zmap], dim=1)))
        x = F.relu(self.deconv2(x))
        x = x + self.skip(noisy)
        return self.tail(self.blocks(x))


class PlainDenoiser(nn.Module):
    """Latent-free baseline: full-resolution 3x3 convs predicting noise."""

    def __init__(self, channels, n_layers):
        super(PlainDenoiser, self).__init__()
        layers = [nn.Conv2d(3, channels, kernel_size=3, padding=1)]
        for _ in range(n_layers - 2):
            layers.append(nn.Conv2d(channels, channels, kernel_size=3, padding=1))
        self.body = nn.ModuleList(layers)
        self.tail = nn.Conv2d(channels, 3, kernel_size=3, padding=1)

    def forward(self, noisy, z=None):
        x = noisy
        for conv in self.body:
            x = F.relu(conv(x))
        return self.tail(x)


class SRSN(nn.Module):
    """Residual refinement of a bicubic-upsampled image. Returns R(B);
    the caller adds the global skip."""

    def __init__(self, channels, n_blocks):
        super(SRSN, self).__init__()
        self.head = nn.Conv2d(3, channels, kernel_size=3, stride=1, padding=1)
        self.blocks = nn.Sequential(*[ResidualBlock(channels) for _ in range(n_blocks)])
        self.tail = nn.Conv2d(channels, 3, kernel_size=3, stride=1, padding=1)

    def forward(self, upsampled):
        return self.tail(self.blocks(self.head(upsampled)))


class Discriminator(nn.Module):
    """Stride-2 conv stack, global average pool and one linear unit.
    Returns logits; squashing is done by the caller."""

    def __init__(self, channels):
        super(Discriminator, self).__init__()
        layers = []
        in_ch = 3
        for out_ch in channels:
            layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1))
            in_ch = out_ch
        self.stages = nn.ModuleList(layers)
        self.classifier = nn.Linear(in_ch, 1)

    def forward(self, x):
        for conv in self.stages:
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
        return self.classifier(x.mean(dim=(2, 3))).squeeze(1)


class FeatureExtractor(nn.Module):
    """Frozen conv stack; each stage is conv-relu followed by 2x average
    pooling, so the output is 1/16 of the input after four stages."""

    def __init__(self, channels):
        super(FeatureExtractor, self).__init__()
        layers = []
        in_ch = 3
        for out_ch in channels:
            layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1))
            in_ch = out_ch
        self.stages = nn.ModuleList(layers)

    def forward(self, x):
        for conv in self.stages:
            x = F.avg_pool2d(F.relu(conv(x)), 2)
        return x
