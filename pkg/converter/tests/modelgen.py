"""Keras -> per-tensor int8 TFLite builders for the converter tests.

Pretrained weights are not available offline, so models carry random
weights; the conversion claims under test (op mapping, quantization
plumbing, headroom) are architecture-determined.
"""

import numpy as np
import tensorflow as tf


def _to_tflite(model, input_shape, per_tensor=True, seed=11):
    def rep():
        rng = np.random.default_rng(seed)
        for _ in range(48):
            yield [rng.uniform(0, 1, size=(1, *input_shape)).astype(np.float32)]

    conv = tf.lite.TFLiteConverter.from_keras_model(model)
    conv.optimizations = [tf.lite.Optimize.DEFAULT]
    conv.representative_dataset = rep
    conv.target_spec.supported_ops = [tf.lite.OpsSet.TFLITE_BUILTINS_INT8]
    conv.inference_input_type = tf.int8
    conv.inference_output_type = tf.int8
    conv._experimental_disable_per_channel = per_tensor
    return conv.convert()


def build_fixture_tflite(per_tensor=True) -> bytes:
    """Small conv/maxpool/conv/fc/softmax model, fully int8 per-tensor.

    No average pooling on purpose: its tie rounding below the stored-int8
    zero differs from the engine's ties-up semantics, so it stays out of
    the element-exact fidelity fixture.
    """
    tf.keras.utils.set_random_seed(5)
    inp = tf.keras.Input(shape=(10, 10, 3), batch_size=1)
    x = tf.keras.layers.Conv2D(
        6, 3, activation=tf.nn.relu6, bias_initializer="random_normal")(inp)
    x = tf.keras.layers.MaxPooling2D(2)(x)
    x = tf.keras.layers.Conv2D(
        8, 3, strides=2, padding="same", activation="relu",
        bias_initializer="random_normal")(x)
    x = tf.keras.layers.Flatten()(x)
    x = tf.keras.layers.Dense(7, bias_initializer="random_normal")(x)
    out = tf.keras.layers.Softmax()(x)
    return _to_tflite(tf.keras.Model(inp, out), (10, 10, 3),
                      per_tensor=per_tensor)


def build_float_tflite() -> bytes:
    tf.keras.utils.set_random_seed(5)
    inp = tf.keras.Input(shape=(4, 4, 1), batch_size=1)
    out = tf.keras.layers.Conv2D(2, 3)(inp)
    conv = tf.lite.TFLiteConverter.from_keras_model(tf.keras.Model(inp, out))
    return conv.convert()


def build_unsupported_op_tflite() -> bytes:
    """Contains a quantized ADD, which the converter must reject by name."""
    tf.keras.utils.set_random_seed(5)
    inp = tf.keras.Input(shape=(4, 4, 2), batch_size=1)
    a = tf.keras.layers.Conv2D(2, 1, bias_initializer="random_normal")(inp)
    out = tf.keras.layers.Add()([a, inp])
    return _to_tflite(tf.keras.Model(inp, out), (4, 4, 2))


def build_mobilenet_v1_tflite(alpha=0.25, size=128, classes=1000) -> bytes:
    """MobileNet V1 architecture (28 conv-type layers): standard conv,
    13 depthwise/pointwise pairs, 1x1 classifier conv, average pool,
    reshape, softmax."""
    tf.keras.utils.set_random_seed(7)

    def c(ch):
        return max(8, int(ch * alpha))

    relu6 = tf.nn.relu6
    inp = tf.keras.Input(shape=(size, size, 3), batch_size=1)
    x = tf.keras.layers.Conv2D(c(32), 3, strides=2, padding="same",
                               activation=relu6,
                               bias_initializer="random_normal")(inp)
    blocks = [
        (64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2),
        (512, 1), (512, 1), (512, 1), (512, 1), (512, 1), (1024, 2),
        (1024, 1),
    ]
    for ch, stride in blocks:
        x = tf.keras.layers.DepthwiseConv2D(
            3, strides=stride, padding="same", activation=relu6,
            bias_initializer="random_normal")(x)
        x = tf.keras.layers.Conv2D(
            c(ch), 1, activation=relu6,
            bias_initializer="random_normal")(x)
    pool = size // 32
    x = tf.keras.layers.AveragePooling2D(pool)(x)
    x = tf.keras.layers.Conv2D(classes, 1,
                               bias_initializer="random_normal")(x)
    x = tf.keras.layers.Reshape((classes,))(x)
    out = tf.keras.layers.Softmax()(x)
    return _to_tflite(tf.keras.Model(inp, out), (size, size, 3), seed=13)
