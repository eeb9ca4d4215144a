import numpy as np
from django.test import SimpleTestCase

from linbft.accounting import BODY, CONSENSUS, SizeClass, TransmissionLog, TransmissionRecord
from linbft.network import DeliveryModel, NetworkConfig


def model(**kwargs):
    return DeliveryModel(NetworkConfig(**kwargs), np.random.default_rng(0))


class DeliveryModelTests(SimpleTestCase):
    def test_after_gst_within_delta(self):
        delivery = model(delta=10, gst=0)
        for now in range(0, 500, 7):
            at = delivery.arrival(0, 1, now, "prepare_vote")
            self.assertTrue(now + 1 <= at <= now + 10)

    def test_delay_max_takes_full_delta(self):
        self.assertEqual(model(delta=10, gst=0).arrival(0, 1, 50, "cc", delay_max=True), 60)

    def test_before_gst_arrives_by_gst_plus_delta(self):
        delivery = model(delta=10, gst=300)
        for now in range(0, 300, 13):
            at = delivery.arrival(0, 1, now, "preprepare")
            self.assertLessEqual(at, 310)
            self.assertGreater(at, now)

    def test_certificates_held_past_receiver_deadline(self):
        delivery = model(delta=10, gst=300)
        self.assertEqual(delivery.arrival(0, 1, 20, "cc", receiver_deadline=80), 81)
        self.assertEqual(delivery.arrival(0, 1, 20, "cc", receiver_deadline=500), 310)

    def test_drop_before_gst(self):
        delivery = model(delta=10, gst=100, drop_before_gst=True)
        self.assertIsNone(delivery.arrival(0, 1, 50, "preprepare"))
        self.assertIsNotNone(delivery.arrival(0, 1, 150, "preprepare"))

    def test_fifo_links_without_reorder(self):
        delivery = model(delta=10, gst=0, reorder=False)
        arrivals = [delivery.arrival(0, 1, now, "prepare_vote") for now in range(20)]
        self.assertEqual(arrivals, sorted(arrivals))

    def test_same_seed_same_delays(self):
        a = [model(delta=10, gst=0).arrival(0, 1, t, "x") for t in range(30)]
        b = [model(delta=10, gst=0).arrival(0, 1, t, "x") for t in range(30)]
        self.assertEqual(a, b)

    def test_config_checks(self):
        with self.assertRaises(ValueError):
            NetworkConfig(delta=0)
        with self.assertRaises(ValueError):
            NetworkConfig(gst=-1)


class TransmissionLogTests(SimpleTestCase):
    def test_units(self):
        self.assertEqual(SizeClass.CONSTANT.units(64), 1)
        self.assertEqual(SizeClass.LINEAR.units(64), 64)
        record = TransmissionRecord(1, 1, "fallback", SizeClass.LINEAR, n=7, count=6)
        self.assertEqual(record.units, 42)

    def test_uncounted_records_stay_out_of_volume(self):
        log = TransmissionLog()
        log.append(TransmissionRecord(1, 1, "preprepare", SizeClass.CONSTANT, n=4, count=3))
        log.append(TransmissionRecord(1, 1, "cc", SizeClass.CONSTANT, n=4, counted_toward_completion=False))
        log.append(TransmissionRecord(2, 1, "preprepare", SizeClass.CONSTANT, n=4))
        log.append(TransmissionRecord(1, 1, "block_body", SizeClass.LINEAR, n=4, channel=BODY))
        self.assertEqual(log.volume_by_height(CONSENSUS), {1: 3, 2: 1})
        self.assertEqual(log.total_units(BODY), 4)
        self.assertEqual(len(log.rows()), 4)
        self.assertEqual(log.rows()[3]["size_class"], "linear")
