int otreg_placeholder_test_ot;
