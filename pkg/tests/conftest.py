from hypothesis import HealthCheck, settings

# JIT compilation elsewhere in the suite can stall the first draws; timing
# health checks are noise here, assertions are not.
settings.register_profile("suite", suppress_health_check=[HealthCheck.too_slow],
                          deadline=None)
settings.load_profile("suite")
