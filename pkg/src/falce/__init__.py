"""falce: Fourier-adapted locality contrast enhancement for mammograms.

The package bundles the preprocessing pipeline (low-frequency amplitude
transfer, adaptive equalization, foreground masking), the numerical
kernels of a domain-adversarial detection objective with a desk-scale
min-max trainer, and detection evaluation / dataset split tools.
"""

from falce.errors import CsvFormatError, FalceError, ImageIOError, NumericsError
from falce.image import GrayImage, Histogram, histogram, load_image, resize, save_image
from falce.spectral import (BetaMask, Spectrum, amplitude, beta_mask, fda_transfer,
                            fft2, ifft2, phase, shift_center, unshift_center)
from falce.enhance import UNLIMITED_CLIP, ClaheParams, clahe, equalize_hist
from falce.segment import (BinaryMask, StructElem, apply_mask, binarize, breast_mask,
                           dilate, erode, opening, otsu_threshold, roi_crop)
from falce.pipeline import (BatchReport, FalceConfig, falce_source, falce_target,
                            load_config, run_batch)
from falce.daod import (BBox, DomainBatch, Proposal, RelationMatrix, ToyAdaptState,
                        build_relation_matrix, consistency_loss, eagr_disc_loss,
                        image_domain_loss, instance_domain_loss, iou, mgrm_loss,
                        pim_filter, total_loss, toy_adapt, update_grm)
from falce.evalkit import (Detection, GroundTruth, ManifestRecord, average_precision,
                           map_classes, mean_ap, split_by_density, stratified_split)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
