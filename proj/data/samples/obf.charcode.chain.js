var s = String.fromCharCode(104,111,115,116,103,117,97,114,100,32,105,110,101,114,116,32,115,97,109,112,108,101,32,116,101,120,116,44,32,110,111,116,32,101,120,101,99,117,116,97,98,108,101,32,97,116,32,97,108,108);
