from vesselfit._version import __version__
from vesselfit.utils.fileio import (read_mesh_obj, read_params_json, read_polyline, read_volume, write_mesh_obj,
                                    write_params_json, write_polyline, write_volume)
from vesselfit.utils.fit import FitConfig, FitInputs, fit_vessel, init_params, run_stage
from vesselfit.utils.metrics import chamfer, dice_score, hd95
from vesselfit.utils.misc import version
from vesselfit.utils.model import VesselParams, scale_radius, vessel_mesh
from vesselfit.utils.records import get_records, reset
from vesselfit.utils.sdf import exact_sdf, rasterize_exact
from vesselfit.utils.synth import extract_preliminary_centerline, make_case, sparsify_slices
from vesselfit.utils.voxelizer import hard_voxelize, soft_voxelize
