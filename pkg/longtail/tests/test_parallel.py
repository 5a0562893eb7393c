import threading
import time
import unittest

from longtail.parallel import available_cpus, imap_ordered


class TestImapOrdered(unittest.TestCase):

    def test_order_preserved(self):
        def slow_square(x):
            # later tasks finish first
            time.sleep(0.001 * (10 - x))
            return x * x
        for cpus in (1, 2, 4):
            self.assertEqual(list(imap_ordered(slow_square, range(10), cpus=cpus)), [x * x for x in range(10)])

    def test_empty(self):
        self.assertEqual(list(imap_ordered(abs, [], cpus=4)), [])

    def test_generator_tasks(self):
        tasks = (-x for x in range(5))
        self.assertEqual(list(imap_ordered(abs, tasks, cpus=3)), [0, 1, 2, 3, 4])

    def test_callback(self):
        seen = []
        lock = threading.Lock()
        def callback(task, total):
            with lock:
                seen.append(task)
        list(imap_ordered(abs, range(6), cpus=2, callback=callback))
        self.assertEqual(sorted(seen), list(range(6)))

    def test_error_propagates(self):
        def fail_on_three(x):
            if x == 3:
                raise ValueError("three")
            return x
        for cpus in (1, 2):
            with self.assertRaises(ValueError):
                list(imap_ordered(fail_on_three, range(8), cpus=cpus))

    def test_error_while_earlier_tasks_run(self):
        def task(x):
            if x == 1:
                raise RuntimeError("one")
            time.sleep(1.0 if x == 0 else 0.1)
            return x

        outcome = []
        def consume():
            try:
                list(imap_ordered(task, range(40), cpus=4))
            except RuntimeError as err:
                outcome.append(err)

        consumer = threading.Thread(target=consume, daemon=True)
        consumer.start()
        consumer.join(timeout=30)
        self.assertFalse(consumer.is_alive())
        self.assertEqual(len(outcome), 1)
        self.assertEqual(str(outcome[0]), "one")

    def test_first_error_raised(self):
        def task(x):
            if x >= 2:
                time.sleep(0.01 * x)
                raise KeyError(x)
            time.sleep(0.5)
            return x
        with self.assertRaises(KeyError) as ctx:
            list(imap_ordered(task, range(6), cpus=3))
        self.assertEqual(ctx.exception.args, (2,))

    def test_early_close(self):
        it = imap_ordered(abs, range(100), cpus=2)
        self.assertEqual(next(it), 0)
        it.close()

    def test_available_cpus(self):
        self.assertEqual(available_cpus(3), 3)
        self.assertGreaterEqual(available_cpus(0), 1)
        self.assertRaises(ValueError, available_cpus, -1)
