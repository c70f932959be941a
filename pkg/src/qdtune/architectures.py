"""Fixed network architectures for state estimation and quality control.

Layer order per block is convolution, dropout, optional layer normalization,
activation; every network ends with global average pooling, an optional dense
block, and a softmax head.
"""

from .neuralnet import NetworkSpec, conv, dense, dropout, layer, maxpool

NOISELESS_DSE = NetworkSpec(
    name="noiseless-dse",
    outputs=5,
    learning_rate=3.45e-3,
    layers=(
        conv(23, 5, stride=2), dropout(0.12), layer("layernorm"), layer("relu"),
        conv(7, 5, stride=2), dropout(0.28), layer("layernorm"), layer("relu"),
        conv(18, 5, stride=2), dropout(0.30), layer("layernorm"), layer("relu"),
        layer("avgpool"),
        dense(5), layer("softmax"),
    ),
)

NOISY_DSE = NetworkSpec(
    name="noisy-dse",
    outputs=5,
    learning_rate=1.21e-3,
    layers=(
        conv(22, 7, stride=1), dropout(0.66), layer("relu"),
        conv(22, 7, stride=2), dropout(0.66), layer("relu"),
        conv(35, 7, stride=1), dropout(0.19), layer("relu"),
        conv(35, 7, stride=2), dropout(0.19), layer("relu"),
        layer("avgpool"),
        dense(5), layer("softmax"),
    ),
)

# unpadded convolutions here: the padding choice does not change the parameter count
# no activation is listed between the 161-unit dense layer and the output head
DQC = NetworkSpec(
    name="dqc",
    outputs=3,
    learning_rate=2.65e-4,
    layers=(
        conv(184, 7, stride=1, padding="valid"), dropout(0.05), layer("layernorm"), layer("swish"),
        conv(249, 3, stride=1, padding="valid"), layer("layernorm"), layer("swish"),
        maxpool(2, 2),
        layer("avgpool"),
        dense(161), dropout(0.6),
        dense(3), layer("softmax"),
    ),
)

ARCHITECTURES = {"noiseless": NOISELESS_DSE, "noisy": NOISY_DSE, "dqc": DQC}
