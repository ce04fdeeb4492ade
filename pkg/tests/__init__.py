# Tests for DEA sensor selection
