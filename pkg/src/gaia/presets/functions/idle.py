import time

import torch


def handle(wait_time):
    time.sleep(wait_time / 1000)
    return {"waited_ms": wait_time, "torch": torch.__version__}
