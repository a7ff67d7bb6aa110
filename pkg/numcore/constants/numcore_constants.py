# Activations
LEAKY_RELU = 'leaky-relu'
TANH = 'tanh'
LINEAR = 'none'

HIDDEN_ACTIVATION_CHOICES = (
    (LEAKY_RELU, 'Leaky ReLU'),
)
OUTPUT_ACTIVATION_CHOICES = (
    (TANH, 'Tanh'),
    (LINEAR, 'None'),
)

LEAKY_RELU_SLOPE = 0.01

# Initialization schemes
ORTHOGONAL = 'orthogonal'
UNIFORM_SCALED = 'uniform-scaled'
ZEROS = 'zeros'

INIT_SCHEME_CHOICES = (
    (ORTHOGONAL, 'Orthogonal'),
    (UNIFORM_SCALED, 'Uniform, fan-in scaled'),
    (ZEROS, 'All zeros'),
)

# Optimizers
SGD = 'sgd'
ADAM = 'adam'

OPTIMIZER_CHOICES = (
    (SGD, 'SGD'),
    (ADAM, 'Adam'),
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Gradient checking
FD_EPSILON = 1e-5
RELATIVE_ERROR_FLOOR = 1e-8

# Weight files
NET_FORMAT_VERSION = 1
NET_MANIFEST_SUFFIX = '.netjson'
NET_ARRAY_SUFFIX = '.netbin'
NET_ARRAY_DTYPE = '<f8'
