from setuptools import find_packages, setup

setup(
    name='vcsel_rs',
    packages=find_packages(exclude=['tests']),
    version='0.1.0',
    description='Monte-Carlo simulator for rate splitting in VCSEL-based optical wireless downlinks',
    keywords=['optical wireless', 'vcsel', 'rate splitting', 'precoding'],
    install_requires=[
        'numpy>=1.22.0',
        'scipy>=1.8.0',
        'scikit-learn>=1.1.0',
        'pandas>=1.4.0',
        'matplotlib>=3.5.0',
        'fire',
        'tqdm',
        'jsonlines'
    ],
    extras_require={
        'test': ['pytest>=7.0']
    },
    entry_points={
        'console_scripts': ['vcsel-rs=vcsel_rs.cli:main']
    },
    python_requires='>=3.8',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',

        'Topic :: Scientific/Engineering',

        'License :: OSI Approved :: Apache Software License',

        'Programming Language :: Python :: 3',
    ],
)
