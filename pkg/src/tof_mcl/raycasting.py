"""
Batched ray/triangle intersection running on torch tensors in float64.

The kernel is chunked over rays only: every ray is always tested against the
whole triangle list in a single call, so the result of a ray never depends on
how many other rays share its chunk.
"""

from typing import Final, Optional
import numpy as np
import torch

from tof_mcl import data_types

DETERMINANT_EPS: Final = 1e-12
DEFAULT_PAIR_BUDGET: Final = 2 ** 20


def resolve_device(device: Optional[torch.device | str] = None
                   ) -> torch.device:
    if device is None:
        return torch.device('cuda:0' if torch.cuda.is_available() else 'cpu')
    return torch.device(device)


def _dot(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a[..., 0] * b[..., 0]
            + a[..., 1] * b[..., 1]
            + a[..., 2] * b[..., 2])


def _cross(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.stack([a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
                        a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
                        a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]],
                       dim=-1)


def _intersect_chunk(origins: torch.Tensor,
                     directions: torch.Tensor,
                     v0: torch.Tensor,
                     edge1: torch.Tensor,
                     edge2: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    o = origins[:, None, :]
    d = directions[:, None, :]
    p_vec = _cross(d, edge2)
    det = _dot(edge1, p_vec)
    usable = det.abs() > DETERMINANT_EPS
    inv_det = torch.where(usable, 1 / torch.where(usable, det, 1.), 0.)
    t_vec = o - v0
    u = _dot(t_vec, p_vec) * inv_det
    q_vec = _cross(t_vec, edge1)
    v = _dot(d, q_vec) * inv_det
    t = _dot(edge2, q_vec) * inv_det
    hit = usable & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0)
    t = torch.where(hit, t, torch.inf)
    # argmin returns the first minimal index, ties go to the lower triangle
    best = t.argmin(dim=1)
    distance = t.gather(1, best[:, None]).squeeze(1)
    best = torch.where(torch.isfinite(distance), best, -1)
    return distance, best


def intersect_triangles(
        origins: data_types.FloatArray,
        directions: data_types.FloatArray,
        vertices: data_types.FloatArray,
        triangles: data_types.IntArray,
        *,
        device: Optional[torch.device | str] = None,
        chunk_size: Optional[int] = None,
) -> tuple[data_types.FloatArray, data_types.IntArray]:
    """
    Nearest non-negative hit of each ray over a triangle list.

    Args:
        origins: array of shape (N, 3).
        directions: array of shape (N, 3), not required to be unit vectors.
        vertices: array of shape (V, 3).
        triangles: integer array of shape (T, 3) indexing vertices.
        device: where the computation runs. Defaults to cuda:0 if available.
        chunk_size: maximum number of ray/triangle pairs evaluated at once.

    Returns:
        the distances along the rays (inf when missed) and the index of the
        triangle hit (-1 when missed).
    """
    device = resolve_device(device)
    pair_budget = DEFAULT_PAIR_BUDGET if chunk_size is None else chunk_size
    num_rays = len(origins)
    num_triangles = len(triangles)
    distances = np.full(num_rays, np.inf)
    indices = np.full(num_rays, -1, dtype=np.int64)
    if not num_rays:
        return distances, indices
    rays_per_chunk = max(1, pair_budget // max(num_triangles, 1))
    corners = np.ascontiguousarray(
        np.asarray(vertices, dtype=np.float64)[np.asarray(triangles)]
    )
    tri = torch.as_tensor(corners, dtype=torch.float64, device=device)
    v0 = tri[None, :, 0]
    edge1 = tri[None, :, 1] - tri[None, :, 0]
    edge2 = tri[None, :, 2] - tri[None, :, 0]
    all_origins = torch.as_tensor(
        np.ascontiguousarray(origins, dtype=np.float64), device=device
    )
    all_directions = torch.as_tensor(
        np.ascontiguousarray(directions, dtype=np.float64), device=device
    )
    with torch.inference_mode():
        for start in range(0, num_rays, rays_per_chunk):
            stop = min(start + rays_per_chunk, num_rays)
            distance, best = _intersect_chunk(all_origins[start:stop],
                                              all_directions[start:stop],
                                              v0,
                                              edge1,
                                              edge2)
            distances[start:stop] = distance.cpu().numpy()
            indices[start:stop] = best.cpu().numpy()
    return distances, indices
