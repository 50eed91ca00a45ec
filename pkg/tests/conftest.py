import numpy as np
import pytest

from ptkit.basis_design import reference_muub
from ptkit.channels import InstrumentBasis, pauli_povm
from ptkit.simulator import build_process, generate_dataset


@pytest.fixture(scope="session")
def povm():
    return pauli_povm()


@pytest.fixture(scope="session")
def muub_instrument():
    return InstrumentBasis.from_unitaries(reference_muub().matrices())


@pytest.fixture(scope="session")
def haar_process_k2():
    return build_process(k=2, kind="haar", seed=11)


@pytest.fixture(scope="session")
def exact_dataset_k2(haar_process_k2, muub_instrument):
    return generate_dataset(haar_process_k2, muub_instrument, exact=True)
