"""NIfTI-1 reading and writing on top of nibabel."""

import os
import uuid
from pathlib import Path

import nibabel as nib
import numpy as np
from nibabel.filebasedimages import ImageFileError
from nibabel.spatialimages import HeaderDataError

from njtvreg.utils.log import logger
from njtvreg.volume import NiftiFormatError, UnsupportedFormatError, Volume

SUPPORTED_DTYPES = {np.dtype(t) for t in (np.uint8, np.int16, np.int32, np.float32, np.float64)}


def header_world(header: nib.Nifti1Header) -> np.ndarray:
    """Voxel-to-world matrix with precedence sform > qform > diagonal(pixdim)."""
    sform, sform_code = header.get_sform(coded=True)
    if sform is not None and sform_code > 0:
        return sform
    qform, qform_code = header.get_qform(coded=True)
    if qform is not None and qform_code > 0:
        return qform
    return np.diag([*header.get_zooms()[:3], 1.0])


def load_nifti(path: str | Path) -> Volume:
    path = Path(path)
    try:
        img = nib.load(path)
    except (ImageFileError, HeaderDataError, EOFError) as e:
        raise NiftiFormatError(f"Could not parse '{path}' as NIfTI-1: {e}") from e
    if not isinstance(img, nib.Nifti1Pair) or isinstance(img, (nib.Nifti2Pair, nib.Nifti2Image)):
        raise UnsupportedFormatError(f"'{path}' is a {type(img).__name__}, only NIfTI-1 is supported")
    dtype = img.get_data_dtype()
    if np.dtype(dtype.newbyteorder("=")) not in SUPPORTED_DTYPES:
        raise UnsupportedFormatError(f"'{path}' has unsupported voxel type {dtype}")
    shape = img.shape
    if len(shape) == 4 and shape[3] == 1:
        shape = shape[:3]
    if len(shape) != 3:
        raise UnsupportedFormatError(f"'{path}' has shape {img.shape}, expected a single 3D frame")
    data = np.asarray(img.get_fdata(dtype=np.float64)).reshape(shape)
    missing = np.isnan(data)
    if missing.any():
        logger.debug(f"'{path}': {int(missing.sum())} NaN voxels recorded as missing")
        data = np.where(missing, 0.0, data)
    return Volume(data, header_world(img.header), missing)


def save_nifti(v: Volume, path: str | Path) -> None:
    """Write a float32 NIfTI-1 with sform = world (code 2). Missing voxels are written as NaN. The write is atomic."""
    path = Path(path)
    data = np.array(v.data, dtype=np.float32)
    if v.missing is not None:
        data[v.missing] = np.nan
    img = nib.Nifti1Image(data, np.asarray(v.world))
    img.set_sform(np.asarray(v.world), code=2)
    # keep the full suffix (.nii or .nii.gz) so nibabel picks the right compression
    tmp = path.with_name(f".tmp-{uuid.uuid4().hex[:8]}-{path.name}")
    try:
        nib.save(img, tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)
