namespace misfit {}
