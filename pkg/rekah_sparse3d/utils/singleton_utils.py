"""singleton pattern base class implementation

scene workers run in threads and may ask for the instance concurrently,
so creation is guarded by a lock.
"""

import threading


class SingletonInstance:
    """base class for singleton pattern implementation (one instance per subclass)"""

    _instances = {}
    _instances_lock = threading.Lock()

    @classmethod
    def instance(cls, *args, **kwargs):
        """create or get the singleton instance"""
        existing = SingletonInstance._instances.get(cls)
        if existing is not None:
            return existing
        with SingletonInstance._instances_lock:
            if cls not in SingletonInstance._instances:
                SingletonInstance._instances[cls] = cls(*args, **kwargs)
            return SingletonInstance._instances[cls]

    @classmethod
    def reset_instance(cls):
        """reset the singleton instance (for testing)"""
        with SingletonInstance._instances_lock:
            SingletonInstance._instances.pop(cls, None)
