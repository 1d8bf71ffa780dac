import os
import json

import pytest

os.environ.setdefault('EQUILIBRIUM_CONFIG', 'testing')

from models import PcpInstance, EncodingParams
from utils.pcp_compiler import compile_encoding, EncodingSource, OracleSource


@pytest.fixture
def post_instance():
    """{(aa,a), (ba,ab), (b,ab)}: solutions (1,3) and (1,2,3)"""
    return PcpInstance(('a', 'b'), (('aa', 'a'), ('ba', 'ab'), ('b', 'ab')))


@pytest.fixture
def unsolvable_instance():
    return PcpInstance(('a',), (('a', 'aa'),))


@pytest.fixture
def params():
    return EncodingParams(epsilon=1.5, e_switch=1.0, base_rate=1.0)


@pytest.fixture
def post_encoding(post_instance, params):
    return compile_encoding(post_instance, params, extended=True)


@pytest.fixture
def post_oracle(post_instance, params):
    return OracleSource(post_instance, params, extended=True)


@pytest.fixture
def post_source(post_encoding):
    return EncodingSource(post_encoding)


@pytest.fixture
def instance_file(tmp_path, post_instance):
    path = tmp_path / 'post.json'
    path.write_text(json.dumps(post_instance.to_dict()))
    return str(path)


@pytest.fixture
def params_file(tmp_path, params):
    path = tmp_path / 'params.json'
    path.write_text(json.dumps(params.to_dict()))
    return str(path)
