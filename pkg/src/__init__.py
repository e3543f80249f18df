# titleskills source package
