"""
Unit tests for checkpoint serialization and the checkpoint cache
"""
import unittest
import sys
import os
import shutil
import tempfile

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from src.flows.checkpoint import (check_input_shape, decode_checkpoint, encode_checkpoint, load_checkpoint,
                                  save_checkpoint)
from src.numerics.rng import RngStream
from src.services.checkpoint_cache import CheckpointCache, dataset_fingerprint
from src.utils.binary_io import U32
from src.utils.errors import ArchMismatchError, DataError, FormatError
from tests.fixtures import TINY_SIMPLE, point_dataset, random_images, random_model


class TestCheckpoint(unittest.TestCase):
    """Test cases for the FLDC checkpoint format"""

    def setUp(self):
        """Set up a scratch directory"""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up after tests"""
        shutil.rmtree(self.temp_dir)

    def _path(self, name='model.fldc'):
        return os.path.join(self.temp_dir, name)

    def _write(self, data, name='broken.fldc'):
        path = self._path(name)
        with open(path, 'wb') as f:
            f.write(data)
        return path

    def test_round_trip_2d(self):
        """Test load(save(m)) reproduces log_prob bit for bit"""
        model = random_model('flow2d(4)', seed=1)
        path = save_checkpoint(model, self._path())
        loaded = load_checkpoint(path, expected_arch='flow2d(4)')
        batch = RngStream(2).normal((16, 2))
        np.testing.assert_array_equal(loaded.log_prob(batch), model.log_prob(batch))

    def test_round_trip_image(self):
        """Test image checkpoints reproduce log_prob with fixed noise"""
        model = random_model(TINY_SIMPLE, seed=3)
        loaded = load_checkpoint(save_checkpoint(model, self._path()))
        images = random_images(3)
        noise = RngStream(4).uniform(images.shape)
        np.testing.assert_array_equal(loaded.log_prob(images, noise=noise), model.log_prob(images, noise=noise))
        self.assertEqual(loaded.arch, model.arch)

    def test_encoding_is_deterministic(self):
        """Test identical models serialize to identical bytes"""
        self.assertEqual(encode_checkpoint(random_model('flow2d(2)', seed=5)),
                         encode_checkpoint(random_model('flow2d(2)', seed=5)))

    def test_parameters_follow_arch_header(self):
        """Test the first parameter name starts right after the architecture JSON"""
        model = random_model('flow2d(2)', seed=1)
        data = encode_checkpoint(model)
        start = 12 + U32.unpack(data[8:12])[0]
        length = U32.unpack(data[start:start + 4])[0]
        first_name = model.params.names()[0]
        self.assertEqual(data[start + 4:start + 4 + length].decode('utf-8'), first_name)

    def test_provenance_round_trip(self):
        """Test training provenance is stored in the header and kept out of the architecture"""
        model = random_model('flow2d(2)', seed=2)
        model.provenance = {'validation_fraction': 0.1, 'seed': 3, 'batch_size': 8, 'samples': 40,
                            'held_out': 4, 'data': 'abc123'}
        loaded = load_checkpoint(save_checkpoint(model, self._path()))
        self.assertEqual(loaded.provenance, model.provenance)
        self.assertEqual(loaded.arch, model.arch)
        self.assertEqual(random_model('flow2d(2)').provenance, {})

    def test_corrupted_parameter_byte(self):
        """Test a flipped byte in the parameter block fails the checksum"""
        data = bytearray(encode_checkpoint(random_model('flow2d(2)')))
        data[-5] ^= 0xFF
        with self.assertRaises(FormatError) as context:
            load_checkpoint(self._write(bytes(data)))
        self.assertIn('checksum mismatch', str(context.exception))
        self.assertIsNotNone(context.exception.offset)

    def test_bad_magic(self):
        """Test a wrong magic number is reported at offset 0"""
        data = b'XXXX' + encode_checkpoint(random_model('flow2d(1)'))[4:]
        with self.assertRaises(FormatError) as context:
            decode_checkpoint(data)
        self.assertIn('bad magic', str(context.exception))
        self.assertEqual(context.exception.offset, 0)

    def test_unsupported_version(self):
        """Test an unknown version is rejected"""
        data = encode_checkpoint(random_model('flow2d(1)'))
        with self.assertRaises(FormatError) as context:
            decode_checkpoint(data[:4] + U32.pack(2) + data[8:])
        self.assertEqual(context.exception.offset, 4)

    def test_truncated(self):
        """Test truncated files raise FormatError"""
        data = encode_checkpoint(random_model('flow2d(2)'))
        for length in (2, 10, len(data) // 2, len(data) - 1):
            with self.assertRaises(FormatError):
                decode_checkpoint(data[:length])

    def test_arch_mismatch(self):
        """Test a flow2d checkpoint loaded as fld-multiscale"""
        path = save_checkpoint(random_model('flow2d(4)'), self._path())
        with self.assertRaises(ArchMismatchError):
            load_checkpoint(path, expected_arch='fld-multiscale')
        with self.assertRaises(ArchMismatchError):
            load_checkpoint(path, expected_arch='flow2d(3)')

    def test_missing_file(self):
        """Test a missing checkpoint raises DataError"""
        with self.assertRaises(DataError):
            load_checkpoint(self._path('absent.fldc'))

    def test_input_shape_check(self):
        """Test data that does not fit the model raises ArchMismatchError"""
        model = random_model(TINY_SIMPLE)
        check_input_shape(model, (1, 4, 4))
        with self.assertRaises(ArchMismatchError):
            check_input_shape(model, (3, 4, 4))


class TestCheckpointCache(unittest.TestCase):
    """Test cases for the local checkpoint cache"""

    def setUp(self):
        """Set up a scratch cache"""
        self.temp_dir = tempfile.mkdtemp()
        self.cache = CheckpointCache(os.path.join(self.temp_dir, 'cache'))

    def tearDown(self):
        """Clean up after tests"""
        shutil.rmtree(self.temp_dir)

    def test_miss_then_hit(self):
        """Test put followed by get returns an equivalent model"""
        model = random_model('flow2d(2)', seed=6)
        key = self.cache.key(model.arch, {'epochs': 1}, 'data', role='real')
        self.assertIsNone(self.cache.get(key))
        self.cache.put(key, model)
        cached = self.cache.get(key)
        batch = RngStream(0).normal((4, 2))
        np.testing.assert_array_equal(cached.log_prob(batch), model.log_prob(batch))
        listed = self.cache.list_checkpoints()
        self.assertEqual(len(listed), 1)
        self.assertTrue(listed[0]['filename'].startswith('real-'))

    def test_unreadable_entry_is_a_miss(self):
        """Test corrupt cache entries are ignored"""
        key = self.cache.key({'name': 'flow2d'}, {}, 'data')
        with open(self.cache.path_for(key), 'wb') as f:
            f.write(b'garbage')
        self.assertIsNone(self.cache.get(key))

    def test_keys_depend_on_inputs(self):
        """Test keys change with training config and data"""
        base = self.cache.key({'name': 'flow2d'}, {'seed': 0}, 'a')
        self.assertEqual(base, self.cache.key({'name': 'flow2d'}, {'seed': 0}, 'a'))
        self.assertNotEqual(base, self.cache.key({'name': 'flow2d'}, {'seed': 1}, 'a'))
        self.assertNotEqual(base, self.cache.key({'name': 'flow2d'}, {'seed': 0}, 'b'))

    def test_dataset_fingerprint(self):
        """Test fingerprints track content"""
        self.assertEqual(dataset_fingerprint(point_dataset(10)), dataset_fingerprint(point_dataset(10)))
        self.assertNotEqual(dataset_fingerprint(point_dataset(10)), dataset_fingerprint(point_dataset(10, seed=1)))


if __name__ == '__main__':
    unittest.main()
