"""Equivariant networks for matrix groups built from typed tensor features."""

from .groups import Family, GroupSpec, enumerate_elements, metric_form, parse_group, sample_element
from .repalgebra import (RegularFeature, TensorType, TypedFeature, convert_up,
                         group_average, invariant_norm, kron, regular_lift, rep_matrix)
from .layers import ChannelLinear, ModelSpec, ScalarMLP, TensorBlock, mix
from .models import (MLP, build_o3_model, build_o5_model, build_o13_model,
                     count_params, equivariance_violation)
from .universal import ScalarInvariantModel, VectorEquivariantModel
from .regular import equitune_average, regular_wrap_forward
from .gnn import EquivariantGNN, PlainMPNN

__version__ = "0.1.0"
