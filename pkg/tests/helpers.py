from smoothmc.rng import Rng
from smoothmc.sampling import observe, sample_masks


def random_observations(seed, n, p, N, sigma=0.5, mode="with_replacement"):
    """Random dense truth plus noisy uniform observations."""
    gen = Rng(seed)
    M = gen.spawn(0).normal(n * p).reshape(n, p)
    masks = sample_masks(n, p, N, mode, gen.spawn(1))
    return M, observe(M, masks, sigma, gen.spawn(2), mode=mode)
