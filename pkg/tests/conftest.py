from hypothesis import settings

# reproducible property runs: derive examples from the test itself, not
# from a per-run random seed
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")
