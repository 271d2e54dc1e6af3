from setuptools import setup

setup(name='nisd',
      version='0.1',
      description='Nearly invariant subspaces of shift operators on truncated Hardy and Dirichlet type spaces in PyTorch',
      license='MIT',
      packages=['nisd',
                'nisd.object'],
      install_requires=['torch>=2.0.0', 'pandas>=1.3'],
      extras_require={'test': ['pytest', 'hypothesis']},
      entry_points={'console_scripts': ['nisd=nisd.cli:main']},
      zip_safe=False)
