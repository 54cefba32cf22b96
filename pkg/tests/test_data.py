"""
Unit tests for datasets, file formats, synthetic generators and reports
"""
import unittest
import sys
import os
import math
import shutil
import tempfile

import numpy as np
import pandas as pd
from PIL import Image

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from src.data.dataset import Dataset, index_ids
from src.data.image_io import load_dataset, load_image_dir, save_dataset
from src.data.synthetic import gen_mixture4, gen_reference_gaussian, gen_two_moons
from src.data.tensor_io import decode_tensor, encode_tensor, read_tensor, write_tensor
from src.numerics.rng import RngStream
from src.utils.errors import ConfigError, DataError, FormatError
from src.utils.reports import config_hash, read_csv, read_footer, write_csv
from tests.fixtures import random_images


class TestDataset(unittest.TestCase):
    """Test cases for the Dataset container"""

    def test_sorted_by_id(self):
        """Test samples are reordered by id"""
        dataset = Dataset(['b', 'a', 'c'], np.array([[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]))
        self.assertEqual(dataset.ids, ['a', 'b', 'c'])
        np.testing.assert_array_equal(dataset.samples[:, 0], [0.0, 1.0, 2.0])

    def test_duplicate_ids(self):
        """Test duplicate ids raise DataError"""
        with self.assertRaises(DataError):
            Dataset(['a', 'a'], np.zeros((2, 2)))

    def test_length_mismatch(self):
        """Test id and sample counts must agree"""
        with self.assertRaises(DataError):
            Dataset(['a'], np.zeros((2, 2)))

    def test_index_ids_sort_numerically(self):
        """Test generated ids sort in index order"""
        ids = index_ids(1_200_000)
        self.assertEqual(ids[:2], ['0000000', '0000001'])
        self.assertEqual(sorted(ids[-3:]), ids[-3:])

    def test_batches(self):
        """Test batch sizes and shuffled coverage"""
        dataset = Dataset.from_array(np.arange(20, dtype=float).reshape(10, 2))
        sizes = [len(ids) for ids, _ in dataset.batches(4)]
        self.assertEqual(sizes, [4, 4, 2])
        self.assertEqual([len(ids) for ids, _ in dataset.batches(4, drop_last=True)], [4, 4])
        shuffled = [i for ids, _ in dataset.batches(3, rng=RngStream(0)) for i in ids]
        self.assertEqual(sorted(shuffled), dataset.ids)
        with self.assertRaises(ConfigError):
            list(dataset.batches(0))

    def test_split(self):
        """Test split sizes and disjointness"""
        dataset = Dataset.from_array(np.zeros((50, 2)))
        main, held = dataset.split(0.2, RngStream(1))
        self.assertEqual((len(main), len(held)), (40, 10))
        self.assertFalse(set(main.ids) & set(held.ids))
        self.assertEqual(len(dataset.split(0.0, RngStream(1))[1]), 0)

    def test_sample_subset(self):
        """Test subsets larger than the dataset raise DataError"""
        dataset = Dataset.from_array(np.zeros((5, 2)))
        self.assertEqual(len(dataset.sample_subset(3, RngStream(0))), 3)
        with self.assertRaises(DataError):
            dataset.sample_subset(6, RngStream(0))


class TestTensorFormat(unittest.TestCase):
    """Test cases for raw tensor files"""

    def setUp(self):
        """Set up a scratch directory"""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up after tests"""
        shutil.rmtree(self.temp_dir)

    def test_round_trip(self):
        """Test float and byte tensors survive a file round trip"""
        points = RngStream(0).normal((7, 2))
        images = random_images(3, (3, 4, 4))
        for name, tensor in (('points.tnsr', points), ('images.tnsr', images)):
            loaded = read_tensor(write_tensor(os.path.join(self.temp_dir, name), tensor))
            self.assertEqual(loaded.dtype, tensor.dtype)
            np.testing.assert_array_equal(loaded, tensor)

    def test_truncated(self):
        """Test truncation reports expected and actual payload sizes"""
        data = encode_tensor(np.zeros((4, 2)))
        with self.assertRaises(FormatError) as context:
            decode_tensor(data[:-10])
        self.assertIn('expected 64 bytes', str(context.exception))

    def test_corrupted(self):
        """Test a flipped payload byte fails the checksum"""
        data = bytearray(encode_tensor(np.ones((4, 2))))
        data[-6] ^= 0x01
        with self.assertRaises(FormatError) as context:
            decode_tensor(bytes(data))
        self.assertIn('checksum mismatch', str(context.exception))

    def test_bad_magic_and_dtype(self):
        """Test bad magic and unsupported dtypes"""
        with self.assertRaises(FormatError):
            decode_tensor(b'NOPE' + encode_tensor(np.zeros(2))[4:])
        with self.assertRaises(FormatError):
            encode_tensor(np.zeros(2, dtype=np.int32))


class TestImageIO(unittest.TestCase):
    """Test cases for PNG directories"""

    def setUp(self):
        """Set up a directory of PNG files"""
        self.temp_dir = tempfile.mkdtemp()
        self.image_dir = os.path.join(self.temp_dir, 'images')
        os.makedirs(self.image_dir)
        pixels = random_images(3, (3, 8, 8), seed=2)
        for index, name in enumerate(['b.png', 'a.png', 'c.png']):
            Image.fromarray(pixels[index].transpose(1, 2, 0)).save(os.path.join(self.image_dir, name))
        self.pixels = pixels

    def tearDown(self):
        """Clean up after tests"""
        shutil.rmtree(self.temp_dir)

    def test_load(self):
        """Test PNGs load as NCHW uint8 with sorted filename ids"""
        dataset = load_image_dir(self.image_dir, expected_resolution=8)
        self.assertEqual(dataset.ids, ['a.png', 'b.png', 'c.png'])
        self.assertEqual(dataset.samples.shape, (3, 3, 8, 8))
        np.testing.assert_array_equal(dataset.samples[1], self.pixels[0])

    def test_resolution_mismatch(self):
        """Test a wrongly sized file is named in the error"""
        Image.new('RGB', (16, 16)).save(os.path.join(self.image_dir, 'odd.png'))
        with self.assertRaises(DataError) as context:
            load_image_dir(self.image_dir, expected_resolution=8)
        self.assertIn('odd.png', str(context.exception))
        resized = load_image_dir(self.image_dir, expected_resolution=8, resize=True)
        self.assertEqual(resized.samples.shape, (4, 3, 8, 8))

    def test_grayscale_becomes_rgb(self):
        """Test single-channel files convert to three channels"""
        Image.new('L', (8, 8), color=40).save(os.path.join(self.image_dir, 'grey.png'))
        dataset = load_image_dir(self.image_dir)
        np.testing.assert_array_equal(dataset.samples[dataset.ids.index('grey.png')], np.full((3, 8, 8), 40))

    def test_missing_and_empty(self):
        """Test missing or empty directories raise DataError"""
        with self.assertRaises(DataError):
            load_dataset(os.path.join(self.temp_dir, 'absent'))
        empty = os.path.join(self.temp_dir, 'empty')
        os.makedirs(empty)
        with self.assertRaises(DataError):
            load_image_dir(empty)

    def test_save_and_reload(self):
        """Test image datasets round-trip through PNG directories and tensor files"""
        dataset = load_image_dir(self.image_dir)
        out_dir = os.path.join(self.temp_dir, 'copy')
        save_dataset(dataset, out_dir)
        np.testing.assert_array_equal(load_dataset(out_dir).samples, dataset.samples)
        tensor_path = save_dataset(dataset, os.path.join(self.temp_dir, 'copy.tnsr'))
        np.testing.assert_array_equal(load_dataset(tensor_path).samples, dataset.samples)


class TestSynthetic(unittest.TestCase):
    """Test cases for synthetic 2D distributions"""

    def test_mixture_moments(self):
        """Test the mixture has zero mean and identity covariance"""
        for s in (0.0, 0.7, 1.35):
            points = gen_mixture4(20000, s, RngStream(0))
            np.testing.assert_allclose(points.mean(axis=0), [0.0, 0.0], atol=0.05)
            np.testing.assert_allclose(np.cov(points.T), np.eye(2), atol=0.05)

    def test_mixture_invalid_separation(self):
        """Test s >= sqrt(2) raises ConfigError"""
        with self.assertRaises(ConfigError):
            gen_mixture4(10, math.sqrt(2.0), RngStream(0))
        with self.assertRaises(ConfigError):
            gen_mixture4(10, -0.1, RngStream(0))

    def test_reference_and_moons(self):
        """Test shapes and determinism"""
        self.assertEqual(gen_reference_gaussian(50, RngStream(0)).shape, (50, 2))
        first = gen_two_moons(100, 0.1, RngStream(3))
        np.testing.assert_array_equal(first, gen_two_moons(100, 0.1, RngStream(3)))
        self.assertEqual(first.shape, (100, 2))
        with self.assertRaises(ConfigError):
            gen_two_moons(0, 0.1, RngStream(0))


class TestReports(unittest.TestCase):
    """Test cases for CSV reports"""

    def test_csv_footer(self):
        """Test reports carry a config hash and seed footer"""
        temp_dir = tempfile.mkdtemp()
        try:
            path = os.path.join(temp_dir, 'out', 'report.csv')
            write_csv(pd.DataFrame({'n': [25, 50], 'mean_fld': [1.1, 1.05]}), path, 'abc123', 7)
            frame = read_csv(path)
            self.assertEqual(list(frame['n']), [25, 50])
            self.assertEqual(read_footer(path), {'config_hash': 'abc123', 'seed': '7'})
        finally:
            shutil.rmtree(temp_dir)

    def test_config_hash_stable(self):
        """Test hashes ignore key order"""
        self.assertEqual(config_hash({'a': 1, 'b': 2}), config_hash({'b': 2, 'a': 1}))
        self.assertEqual(len(config_hash({})), 16)


if __name__ == '__main__':
    unittest.main()
