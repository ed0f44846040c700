#!/usr/bin/env python
# coding=utf-8

# Licence: BSD 3 clause

try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup

setup(
    name='mstgcn',
    license='BSD 3 clause',
    description='Multi-scale spatial temporal graph convolutional networks for skeleton action recognition',
    long_description=open('README.rst').read(),
    version='0.1.0dev0',
    packages=['mstgcn',
              'mstgcn.tests'],
    classifiers=[
        'Intended Audience :: Science/Research',
        'Intended Audience :: Developers',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    python_requires='>=3.8',
    install_requires=['arpeggio>=1.5', 'numpy>=1.17', 'toolz', 'tqdm'],
    tests_require=['pytest', 'pytest-cov'],
    extras_require={
        'tests': ['pytest', 'pytest-cov'],
        'docs': ['Sphinx'],
    },
    entry_points={
        'console_scripts': ['mstgcn=mstgcn.cli:main'],
    },
    platforms=['Any'],
)
