from . import (
    test_cli,
    test_config,
    test_data,
    test_deplab,
    test_diagnostics,
    test_distributions,
    test_doctest,
    test_errors,
    test_inference,
    test_latent,
    test_marginal,
    test_parallel,
    test_predict,
    test_utils,
)

def load_tests(loader, suite, pattern):
    suite.addTests(loader.loadTestsFromModule(test_cli))
    suite.addTests(loader.loadTestsFromModule(test_config))
    suite.addTests(loader.loadTestsFromModule(test_data))
    suite.addTests(loader.loadTestsFromModule(test_deplab))
    suite.addTests(loader.loadTestsFromModule(test_diagnostics))
    suite.addTests(loader.loadTestsFromModule(test_distributions))
    suite.addTests(loader.loadTestsFromModule(test_doctest))
    suite.addTests(loader.loadTestsFromModule(test_errors))
    suite.addTests(loader.loadTestsFromModule(test_inference))
    suite.addTests(loader.loadTestsFromModule(test_latent))
    suite.addTests(loader.loadTestsFromModule(test_marginal))
    suite.addTests(loader.loadTestsFromModule(test_parallel))
    suite.addTests(loader.loadTestsFromModule(test_predict))
    suite.addTests(loader.loadTestsFromModule(test_utils))
    return suite
