# kgdiff: triple set prediction with absorbing-state discrete diffusion
