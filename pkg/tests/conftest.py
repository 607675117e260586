from hypothesis import settings

# numba compiles on first call; wall-clock deadlines would flag that as flaky
settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")
