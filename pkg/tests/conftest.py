from hypothesis import settings

# fixed example sequence: property runs are reproducible
settings.register_profile("fixed", derandomize=True, print_blob=True)
settings.load_profile("fixed")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
