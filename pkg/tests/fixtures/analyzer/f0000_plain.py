# expect: mode=cpu dl_import=0 gpu_explicit=0 big_ops=0 small_ops=0
import json


def handler(event):
    total = 0
    for item in event["items"]:
        total = total + item
    return json.dumps({"total": total})
