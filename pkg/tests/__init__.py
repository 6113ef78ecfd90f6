# Test suite initialization
