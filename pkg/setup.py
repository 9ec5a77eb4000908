from setuptools import setup, find_packages

setup(name='TileArray',
      version='0.1.0',
      description='Cycle-level simulator of a weight-stationary systolic matrix engine behind a tile ISA',
      packages=find_packages(exclude=['tests', 'tests.*']),
      license='MIT',
      python_requires='>=3.8',
      install_requires=['numpy>=1.21', 'pandas>=1.3', 'matplotlib>=3.5', 'PyYAML>=5.4'],
      extras_require={'test': ['pytest>=7']},
      entry_points={'console_scripts': ['tilearray=tilearray.cli.main:main']}
     )
