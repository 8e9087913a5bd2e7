int otreg_placeholder_test_loss;
