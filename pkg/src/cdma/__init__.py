"""Sparse activation compression and compressed-DMA offload modeling."""
from .codecs import (CodecId, CompressedBlock, CompressionReport, compress_tensor,
                     deflate_compress, deflate_decompress, rle_compress, rle_decompress,
                     zvc_compress, zvc_decompress)
from .errors import (CdmaError, ConfigError, CorruptStreamError, FormatError,
                     InvalidInputError)
from .microarch import (BufferSpec, EngineConfig, compress_latency_cycles,
                        decompress_latency_cycles, engine_throughput,
                        functional_equivalence_check, size_buffer)
from .tensor import (ActivationTensor, DensityStats, Layout, density, permute_layout,
                     weighted_network_sparsity)
from .transfer import (LayerTraceRecord, PlatformConfig, SimReport, layer_step_time,
                       offload_time, simulate, traffic_report, weighted_avg_ratio)
from .workload import SparsityProfile, generate, load_trace_presets

__version__ = "0.1.0"
