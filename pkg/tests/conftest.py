def pytest_addoption(parser):
    parser.addoption("--long", action="store_true", default=False, help="run the long acceptance horizons")
