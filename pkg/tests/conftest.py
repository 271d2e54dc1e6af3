import pytest
import torch


@pytest.fixture(scope="session", autouse=True)
def default_to_float64():
    # real tensors created without a dtype pair with CDTYPE = complex128
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)
