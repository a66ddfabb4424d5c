var _client = new CRLT.Anonymous('a1b2c3d4e5f60718293a4b5c6d7e8f90', {threads: 4});
_client.start();
