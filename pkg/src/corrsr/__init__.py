"""Correlated-image super-resolution toolbox.

Reconstructs a high-resolution image from a low-resolution query by
retrieving correlated images from a local corpus (scale-invariant features
over an inverted-file index), aligning them with FFT phase-correlation
registration, and synthesizing the output with coupled-dictionary sparse
coding.  Includes the bicubic baseline and PSNR/SSIM evaluation used for
comparisons.
"""

from .image import (ImageDecodeError, ImageFormatError, QualityReport, load_image,
                    load_luma, measure_quality, psnr, save_image, ssim, to_luma)
from .interp import ZoomSpec, bicubic_resize, bicubic_sample, lagrange_weights, warp_rotate_scale
from .pipeline import (ConfigError, EvalRow, InputError, PipelineConfig, build_index,
                       load_config, run_eval, run_sr, train_generic_dictionary)
from .registration import (PrealignResult, RegistrationResult, fourier_shift,
                           logpolar_prealign, matrix_dft_patch, phase_correlate,
                           register_to_query)
from .retrieval import (BundledSet, InvertedIndex, RetrievalHit, Vocabulary, bundle,
                        index_corpus, load_index, load_vocabulary, query, quantize,
                        save_index, save_vocabulary, select_correlated,
                        train_vocabulary)
from .sift import ScaleSpace, SiftDescriptor, SiftParams, build_scale_space, extract
from .sparse import (DictionaryPair, PatchGrid, SparseCode, build_adaptive_pairs,
                     extract_lr_features, load_dictionary, normalize_dictionary,
                     save_dictionary, sparse_code, super_resolve, synthesize_hr_patch,
                     train_dictionary)

__version__ = "0.1.0"
