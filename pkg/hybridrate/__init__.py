# hybridrate package
