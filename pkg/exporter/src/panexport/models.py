"""Model registry: the three supported zoo architectures plus toy nets.

Zoo models load pretrained weights from a local state-dict file when
given (offline-friendly) or from the torchvision hub with
``pretrained=True``; otherwise they come up randomly initialized, which
is enough for format/pipeline work.
"""

import torch
from torch import nn
import torchvision.models as tvm

ZOO = ("resnet50", "mobilenet_v3_large", "googlenet")


class ToyNet(nn.Module):
    """Two-conv toy: deterministic weights, optionally one planted
    border-probe channel in the second conv (top border, responds high)."""

    def __init__(self, seed: int = 7, plant_channel: int | None = 3, classes: int = 10):
        super().__init__()
        torch.manual_seed(seed)
        self.conv0 = nn.Conv2d(3, 16, 3, padding=1, padding_mode="reflect")
        self.conv1 = nn.Conv2d(16, 16, 3, padding=1)
        self.head = nn.Linear(16, classes)
        if plant_channel is not None:
            # top-border probe: negative on the padded row, balancing
            # positive on the middle row, replicated over input channels
            with torch.no_grad():
                pattern = torch.zeros(3, 3)
                pattern[0, :] = -1.0
                pattern[1, :] = 1.0
                w = pattern.expand(16, 3, 3).clone()
                w *= torch.linalg.vector_norm(self.conv1.weight[0]) / torch.linalg.vector_norm(w)
                self.conv1.weight[plant_channel] = w
                self.conv1.bias[plant_channel] = 0.0
        self.plant_channel = plant_channel

    def forward(self, x):
        x = torch.relu(self.conv0(x))
        x = torch.relu(self.conv1(x))
        return self.head(x.mean(dim=(2, 3)))


def build_model(name: str, weights_path: str | None = None, pretrained: bool = False):
    if name == "toy2":
        model = ToyNet()
    elif name == "resnet50":
        model = tvm.resnet50(weights=tvm.ResNet50_Weights.IMAGENET1K_V2 if pretrained else None)
    elif name == "mobilenet_v3_large":
        model = tvm.mobilenet_v3_large(
            weights=tvm.MobileNet_V3_Large_Weights.IMAGENET1K_V2 if pretrained else None
        )
    elif name == "googlenet":
        if pretrained:
            model = tvm.googlenet(weights=tvm.GoogLeNet_Weights.IMAGENET1K_V1)
        else:
            model = tvm.googlenet(weights=None, aux_logits=False, init_weights=True)
    else:
        raise ValueError(f"unknown model {name!r}; expected toy2 or one of {ZOO}")
    if weights_path:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def eligible_convs(model: nn.Module):
    """Named conv layers with kernels bigger than 1x1, in module order."""
    out = []
    for name, module in model.named_modules():
        if isinstance(module, nn.Conv2d) and module.kernel_size[0] * module.kernel_size[1] > 1:
            out.append((name, module))
    return out
